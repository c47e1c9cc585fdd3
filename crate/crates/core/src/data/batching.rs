//! Splitting, class-balanced sampling and fixed-length batching.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::dataset::{Example, Label};
use crate::error::{Error, Result};
use crate::model::{HeadKind, Targets, TokenBatch};

/// Keeps the first `t` ids and right-pads to exactly `t`, returning the row
/// and its mask.
pub fn pad_truncate(ids: &[u32], t: usize, pad_id: u32) -> Result<(Vec<u32>, Vec<u8>)> {
    if t == 0 {
        return Err(Error::contract("sequence length must be at least 1"));
    }
    if ids.is_empty() {
        return Err(Error::contract("cannot batch an empty token sequence: it has no last token"));
    }
    let n = ids.len().min(t);
    let mut row = ids[..n].to_vec();
    row.resize(t, pad_id);
    let mut mask = vec![1u8; n];
    mask.resize(t, 0);
    Ok((row, mask))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// `(⌊0.7n⌋, ⌊0.1n⌋, rest)`, in integer arithmetic.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 7 / 10;
    let val = n / 10;
    (train, val, n - train - val)
}

/// Shuffles `0..n` with a seeded ChaCha8 generator and cuts it into
/// train/validation/test partitions of [`split_sizes`].
pub fn random_split(n: usize, seed: u64) -> Result<Split> {
    if n < 3 {
        return Err(Error::contract(format!("need at least 3 examples to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (a, b, _) = split_sizes(n);
    let test = idx.split_off(a + b);
    let val = idx.split_off(a);
    Ok(Split { train: idx, val, test })
}

/// Inverse-frequency sampling weights: each example of class `k` gets `1/c_k`.
#[derive(Clone, Debug)]
pub struct SamplerWeights {
    pub class_counts: Vec<usize>,
    pub class_weights: Vec<f64>,
    pub example_weights: Vec<f64>,
}

impl SamplerWeights {
    pub fn from_classes(classes: &[usize]) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::contract("sampler needs at least one example"));
        }
        let k = classes.iter().max().map_or(0, |&m| m + 1);
        let mut class_counts = vec![0usize; k];
        for &c in classes {
            class_counts[c] += 1;
        }
        let class_weights: Vec<f64> = class_counts.iter().map(|&c| if c == 0 { 0.0 } else { 1.0 / c as f64 }).collect();
        let example_weights = classes.iter().map(|&c| class_weights[c]).collect();
        Ok(SamplerWeights { class_counts, class_weights, example_weights })
    }

    pub fn len(&self) -> usize {
        self.example_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.example_weights.is_empty()
    }
}

/// `n` draws with replacement, index `i` with probability `s_i / Σs`.
pub fn weighted_sample<R: Rng + ?Sized>(weights: &SamplerWeights, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(&weights.example_weights)
        .map_err(|e| Error::contract(format!("invalid sampling weights: {e}")))?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// Example order for one training epoch: `draws` weighted draws when a
/// sampler is given, otherwise a shuffle of all examples.
pub fn epoch_order<R: Rng + ?Sized>(n: usize, sampler: Option<&SamplerWeights>, draws: usize, rng: &mut R) -> Result<Vec<usize>> {
    match sampler {
        Some(w) => {
            if w.len() != n {
                return Err(Error::contract(format!("sampler covers {} examples, split has {n}", w.len())));
            }
            weighted_sample(w, draws, rng)
        }
        None => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            Ok(idx)
        }
    }
}

/// One model input: token grid, mask and targets for `examples`.
#[derive(Clone, Debug)]
pub struct Batch {
    pub tokens: TokenBatch,
    pub targets: Targets,
    /// Positions of the rows within the source example list.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.tokens.batch
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.batch == 0
    }
}

/// Targets in the form the head's loss expects.
pub fn targets_for(head: HeadKind, labels: &[&Label]) -> Result<Targets> {
    let bad = |l: &Label| Error::contract(format!("label {l:?} does not fit head {}", head.describe()));
    match head {
        HeadKind::BinarySigmoid => labels
            .iter()
            .map(|l| match l {
                Label::Class(c @ (0 | 1)) => Ok(*c as f32),
                _ => Err(bad(l)),
            })
            .collect::<Result<_>>()
            .map(Targets::Binary),
        HeadKind::MultiClassSoftmax { classes } => labels
            .iter()
            .map(|l| match l {
                Label::Class(c) if *c < classes => Ok(*c),
                _ => Err(bad(l)),
            })
            .collect::<Result<_>>()
            .map(Targets::Classes),
        HeadKind::MultiLabelSigmoid { labels: k } => {
            let mut out = Vec::with_capacity(labels.len() * k);
            for l in labels {
                match l {
                    Label::Multi(v) if v.len() == k => out.extend(v.iter().map(|&x| x as f32)),
                    _ => return Err(bad(l)),
                }
            }
            Ok(Targets::Binary(out))
        }
    }
}

/// Cuts `order` into batches of `batch_size`; the last batch may be short.
/// Every row is padded or truncated to exactly `seq_len` tokens.
pub fn make_batches(
    examples: &[Example],
    order: &[usize],
    seq_len: usize,
    batch_size: usize,
    pad_id: u32,
    head: HeadKind,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::contract("batch size must be at least 1"));
    }
    order
        .chunks(batch_size)
        .map(|chunk| {
            let mut ids = Vec::with_capacity(chunk.len() * seq_len);
            let mut mask = Vec::with_capacity(chunk.len() * seq_len);
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let ex = examples.get(i).ok_or(Error::Index { index: i, extent: examples.len() })?;
                let (row, m) = pad_truncate(&ex.ids, seq_len, pad_id)
                    .map_err(|e| Error::contract(format!("example {}: {e}", ex.note_id)))?;
                ids.extend(row);
                mask.extend(m);
                labels.push(&ex.label);
            }
            Ok(Batch {
                tokens: TokenBatch::new(chunk.len(), seq_len, ids, mask)?,
                targets: targets_for(head, &labels)?,
                indices: chunk.to_vec(),
            })
        })
        .collect()
}
