//! Forward pass of the decoder-only transformer classifier.

use rand::RngCore;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::model::params::{BlockLayout, ModelParams};
use crate::tensor::Tensor;

/// A right-padded batch of token ids with its validity mask, both `[B×T]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenBatch {
    pub batch: usize,
    pub seq: usize,
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
}

impl TokenBatch {
    /// Checks that the shapes agree and that every row's mask is a run of 1s
    /// followed by 0s.
    pub fn new(batch: usize, seq: usize, ids: Vec<u32>, mask: Vec<u8>) -> Result<Self> {
        if batch * seq != ids.len() || ids.len() != mask.len() || seq == 0 {
            return Err(Error::Shape { op: "token_batch", lhs: vec![batch, seq], rhs: vec![ids.len(), mask.len()] });
        }
        for (r, row) in mask.chunks_exact(seq).enumerate() {
            if row.iter().any(|&m| m > 1) || row.windows(2).any(|w| w[0] == 0 && w[1] == 1) {
                return Err(Error::contract(format!("row {r}: mask must be 1s followed by padding 0s")));
            }
        }
        Ok(TokenBatch { batch, seq, ids, mask })
    }

    /// Right-pads variable-length rows to the longest one with `pad_id`.
    pub fn from_rows(rows: &[Vec<u32>], pad_id: u32) -> Result<Self> {
        let seq = rows.iter().map(Vec::len).max().unwrap_or(0).max(1);
        let mut ids = Vec::with_capacity(rows.len() * seq);
        let mut mask = Vec::with_capacity(rows.len() * seq);
        for row in rows {
            ids.extend_from_slice(row);
            ids.resize(ids.len() + seq - row.len(), pad_id);
            mask.extend(std::iter::repeat_n(1u8, row.len()));
            mask.extend(std::iter::repeat_n(0u8, seq - row.len()));
        }
        Self::new(rows.len(), seq, ids, mask)
    }

    pub fn row_ids(&self, b: usize) -> &[u32] {
        &self.ids[b * self.seq..(b + 1) * self.seq]
    }

    pub fn row_mask(&self, b: usize) -> &[u8] {
        &self.mask[b * self.seq..(b + 1) * self.seq]
    }

    /// Last valid position of each row: mask sum minus one.
    pub fn last_indices(&self) -> Result<Vec<usize>> {
        (0..self.batch)
            .map(|b| {
                let n = self.row_mask(b).iter().filter(|&&m| m == 1).count();
                n.checked_sub(1)
                    .ok_or_else(|| Error::contract(format!("row {b} is all padding and has no last token")))
            })
            .collect()
    }
}

/// Nodes produced by [`forward`].
#[derive(Clone, Debug)]
pub struct ActivationCache {
    /// Output of each block, `[B×T×d]`.
    pub block_outputs: Vec<Var>,
    /// Hidden states after the final layer norm, `[B×T×d]`.
    pub hidden: Var,
    /// Final hidden state at each row's last valid position, `[B×d]`.
    pub last_hidden: Var,
    pub last_index: Vec<usize>,
}

/// `wte[ids] + wpe[t]`, followed by dropout when an RNG is supplied.
pub fn embed<'a>(
    tape: &mut Tape<'a>,
    params: &'a ModelParams,
    batch: &TokenBatch,
    rng: Option<&mut dyn RngCore>,
) -> Result<Var> {
    let cfg = params.config();
    if batch.seq > cfg.n_ctx {
        return Err(Error::ContextLength { len: batch.seq, n_ctx: cfg.n_ctx });
    }
    let layout = params.layout();
    let ids: Vec<usize> = batch.ids.iter().map(|&i| i as usize).collect();
    let positions: Vec<usize> = (0..batch.batch).flat_map(|_| 0..batch.seq).collect();
    let shape = [batch.batch, batch.seq];
    let wte = tape.param(layout.wte, params.tensor(layout.wte));
    let wpe = tape.param(layout.wpe, params.tensor(layout.wpe));
    let tok = tape.embedding(wte, &ids, &shape)?;
    let pos = tape.embedding(wpe, &positions, &shape)?;
    let x = tape.add(tok, pos)?;
    tape.dropout(x, cfg.dropout_p, rng)
}

fn linear<'a>(tape: &mut Tape<'a>, params: &'a ModelParams, x: Var, w: usize, b: usize) -> Result<Var> {
    let wv = tape.param(w, params.tensor(w));
    let bv = tape.param(b, params.tensor(b));
    let y = tape.matmul(x, wv)?;
    tape.add_bias(y, bv)
}

/// Multi-head causal self-attention of block `block` on `x[B×T×d]`; padded
/// key positions (`key_valid == false`) are masked out.
pub fn causal_attention<'a>(
    tape: &mut Tape<'a>,
    params: &'a ModelParams,
    block: usize,
    x: Var,
    key_valid: &[bool],
    mut rng: Option<&mut dyn RngCore>,
) -> Result<Var> {
    let cfg = params.config();
    let l = block_layout(params, block)?;
    let q = linear(tape, params, x, l.wq, l.bq)?;
    let k = linear(tape, params, x, l.wk, l.bk)?;
    let v = linear(tape, params, x, l.wv, l.bv)?;
    let h = cfg.n_head;
    let (q, k, v) = (tape.split_heads(q, h)?, tape.split_heads(k, h)?, tape.split_heads(v, h)?);
    let scores = tape.batch_matmul(q, k, true)?;
    let scores = tape.scale(scores, 1.0 / (cfg.head_dim() as f32).sqrt());
    let scores = tape.attention_mask(scores, key_valid, h)?;
    let weights = tape.softmax(scores);
    let weights = tape.dropout(weights, cfg.dropout_p, reborrow(&mut rng))?;
    let ctx = tape.batch_matmul(weights, v, false)?;
    let ctx = tape.merge_heads(ctx, h)?;
    linear(tape, params, ctx, l.wo, l.bo)
}

/// Pre-norm block: `x' = x + drop(attn(ln1(x)))`, `y = x' + drop(ffn(ln2(x')))`.
pub fn transformer_block<'a>(
    tape: &mut Tape<'a>,
    params: &'a ModelParams,
    block: usize,
    x: Var,
    key_valid: &[bool],
    mut rng: Option<&mut dyn RngCore>,
) -> Result<Var> {
    let cfg = params.config();
    let l = block_layout(params, block)?;
    let g1 = tape.param(l.ln1_g, params.tensor(l.ln1_g));
    let b1 = tape.param(l.ln1_b, params.tensor(l.ln1_b));
    let n1 = tape.layer_norm(x, g1, b1, cfg.ln_eps)?;
    let a = causal_attention(tape, params, block, n1, key_valid, reborrow(&mut rng))?;
    let a = tape.dropout(a, cfg.dropout_p, reborrow(&mut rng))?;
    let x1 = tape.add(x, a)?;

    let g2 = tape.param(l.ln2_g, params.tensor(l.ln2_g));
    let b2 = tape.param(l.ln2_b, params.tensor(l.ln2_b));
    let n2 = tape.layer_norm(x1, g2, b2, cfg.ln_eps)?;
    let u = linear(tape, params, n2, l.w1, l.b1)?;
    let u = tape.gelu(u);
    let f = linear(tape, params, u, l.w2, l.b2)?;
    let f = tape.dropout(f, cfg.dropout_p, rng)?;
    tape.add(x1, f)
}

/// Embeddings, every block, the final layer norm and last-token pooling.
/// Passing an RNG enables dropout (training mode).
pub fn forward<'a>(
    tape: &mut Tape<'a>,
    params: &'a ModelParams,
    batch: &TokenBatch,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<ActivationCache> {
    let last_index = batch.last_indices()?;
    let key_valid: Vec<bool> = batch.mask.iter().map(|&m| m == 1).collect();
    let mut x = embed(tape, params, batch, reborrow(&mut rng))?;
    let mut block_outputs = Vec::with_capacity(params.config().n_layer);
    for b in 0..params.config().n_layer {
        x = transformer_block(tape, params, b, x, &key_valid, reborrow(&mut rng))?;
        block_outputs.push(x);
    }
    let layout = params.layout();
    let g = tape.param(layout.lnf_g, params.tensor(layout.lnf_g));
    let beta = tape.param(layout.lnf_b, params.tensor(layout.lnf_b));
    let hidden = tape.layer_norm(x, g, beta, params.config().ln_eps)?;
    let rows: Vec<usize> = last_index.iter().enumerate().map(|(b, &t)| b * batch.seq + t).collect();
    let last_hidden = tape.gather_rows(hidden, &rows)?;
    Ok(ActivationCache { block_outputs, hidden, last_hidden, last_index })
}

/// Raw head logits `h_T · wᵀ + b`, `[B×C]`.
pub fn classify<'a>(tape: &mut Tape<'a>, params: &'a ModelParams, last_hidden: Var) -> Result<Var> {
    let layout = params.layout();
    let w = tape.param(layout.head_w, params.tensor(layout.head_w));
    let b = tape.param(layout.head_b, params.tensor(layout.head_b));
    let z = tape.matmul_nt(last_hidden, w)?;
    tape.add_bias(z, b)
}

/// Inference-mode logits `[B×C]` without recording gradients.
pub fn predict_logits(params: &ModelParams, batch: &TokenBatch) -> Result<Tensor> {
    let mut tape = Tape::inference();
    let cache = forward(&mut tape, params, batch, None)?;
    let z = classify(&mut tape, params, cache.last_hidden)?;
    Ok(tape.to_tensor(z))
}

fn block_layout(params: &ModelParams, block: usize) -> Result<BlockLayout> {
    params
        .layout()
        .blocks
        .get(block)
        .copied()
        .ok_or(Error::Index { index: block, extent: params.config().n_layer })
}

/// Supervision for one batch.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// One class index per row (softmax head).
    Classes(Vec<usize>),
    /// `B×C` 0/1 values, row-major (sigmoid heads; `C = 1` for binary).
    Binary(Vec<f32>),
}

impl Targets {
    pub fn rows(&self, n_classes: usize) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Binary(v) => v.len() / n_classes.max(1),
        }
    }
}

/// The loss matching the head: cross-entropy for softmax heads, summed binary
/// cross-entropy for sigmoid heads.
pub fn loss(tape: &mut Tape<'_>, params: &ModelParams, logits: Var, targets: &Targets) -> Result<Var> {
    use crate::model::HeadKind;
    match (params.config().head, targets) {
        (HeadKind::MultiClassSoftmax { .. }, Targets::Classes(y)) => tape.cross_entropy(logits, y),
        (HeadKind::BinarySigmoid | HeadKind::MultiLabelSigmoid { .. }, Targets::Binary(y)) => {
            tape.bce_with_logits(logits, y)
        }
        (head, _) => Err(Error::contract(format!("targets do not match the {} head", head.describe()))),
    }
}

fn reborrow<'s>(rng: &'s mut Option<&mut dyn RngCore>) -> Option<&'s mut dyn RngCore> {
    match rng {
        Some(r) => Some(&mut **r),
        None => None,
    }
}
