//! The fine-tuning loop and evaluation.

use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::{epoch_order, make_batches, Batch, Example, SamplerWeights};
use crate::error::{Error, Result};
use crate::model::{classify, forward, loss, HeadKind, ModelParams, Targets};
use crate::tensor::Tensor;
use crate::train::metrics::{auroc, roc_points, ConfusionMatrix};
use crate::tuning::{apply_policy, AdamW, FreezePolicy, OptimizerHp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seq_len: usize,
    pub policy: FreezePolicy,
    pub optimizer: OptimizerHp,
    pub seed: u64,
    /// Validate every this many epochs (and always after the last).
    pub eval_every: usize,
    /// Inverse-frequency sampling of training examples by class.
    pub balance: bool,
    /// Sampled draws per epoch; `None` means one per training example.
    pub draws_per_epoch: Option<usize>,
}

impl TrainConfig {
    pub fn new(policy: FreezePolicy) -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 8,
            seq_len: 1024,
            optimizer: OptimizerHp::for_policy(&policy),
            policy,
            seed: 0,
            eval_every: 1,
            balance: true,
            draws_per_epoch: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.seq_len == 0 || self.eval_every == 0 {
            return Err(Error::config("batch size, sequence length and eval interval must be at least 1"));
        }
        self.optimizer.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// `None` on epochs without validation.
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
    /// Wall-clock time of the training pass only.
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub records: Vec<EpochRecord>,
    pub steps: u64,
    /// Every frozen tensor still equals its value before training.
    pub frozen_unchanged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub n: usize,
    pub loss: f64,
    pub accuracy: f64,
    /// Positive-class F1 for binary heads, macro F1 for multiclass, and
    /// micro F1 over all labels for multilabel.
    pub f1: f64,
    /// `None` when only one class is present. Macro one-vs-rest for
    /// multiclass heads, micro over all labels for multilabel.
    pub auroc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
    /// Binary and multilabel (micro) heads only; empty otherwise.
    pub roc: Vec<(f64, f64)>,
}

/// Per-example decision scores and truth, plus running counts.
struct Accumulator {
    head: HeadKind,
    confusion: ConfusionMatrix,
    /// One score stream per one-vs-rest problem.
    scores: Vec<Vec<f64>>,
    truth: Vec<Vec<bool>>,
    loss_sum: f64,
    n: usize,
}

impl Accumulator {
    fn new(head: HeadKind) -> Self {
        let streams = match head {
            HeadKind::MultiClassSoftmax { classes } if classes > 2 => classes,
            _ => 1,
        };
        Accumulator {
            head,
            confusion: ConfusionMatrix::new(match head {
                HeadKind::MultiClassSoftmax { classes } => classes,
                _ => 2,
            }),
            scores: vec![Vec::new(); streams],
            truth: vec![Vec::new(); streams],
            loss_sum: 0.0,
            n: 0,
        }
    }

    /// Adds a batch of logits with its mean loss.
    fn push(&mut self, logits: &Tensor, targets: &Targets, mean_loss: f64) -> Result<()> {
        let c = self.head.n_classes();
        let z = logits.data();
        let rows = z.len() / c;
        match (self.head, targets) {
            (HeadKind::MultiClassSoftmax { classes }, Targets::Classes(y)) => {
                for (row, &t) in z.chunks_exact(c).zip(y) {
                    let pred = argmax(row);
                    self.confusion.add(t, pred);
                    if classes == 2 {
                        self.scores[0].push(row[1] as f64 - row[0] as f64);
                        self.truth[0].push(t == 1);
                    } else {
                        let lse = log_sum_exp(row);
                        for (k, &z) in row.iter().enumerate().take(classes) {
                            self.scores[k].push(z as f64 - lse);
                            self.truth[k].push(t == k);
                        }
                    }
                }
            }
            (HeadKind::BinarySigmoid | HeadKind::MultiLabelSigmoid { .. }, Targets::Binary(y)) => {
                for (&zi, &yi) in z.iter().zip(y) {
                    let truth = yi >= 0.5;
                    self.confusion.add(usize::from(truth), usize::from(zi >= 0.0));
                    self.scores[0].push(zi as f64);
                    self.truth[0].push(truth);
                }
            }
            _ => return Err(Error::contract(format!("targets do not match the {} head", self.head.describe()))),
        }
        self.loss_sum += mean_loss * rows as f64;
        self.n += rows;
        Ok(())
    }

    fn finish(self) -> Result<Evaluation> {
        if self.n == 0 {
            return Err(Error::contract("cannot evaluate on an empty set"));
        }
        let defined: Vec<f64> =
            self.scores.iter().zip(&self.truth).filter_map(|(s, t)| auroc(s, t).ok()).collect();
        let auroc = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        let roc = if self.scores.len() == 1 { roc_points(&self.scores[0], &self.truth[0]).unwrap_or_default() } else { Vec::new() };
        Ok(Evaluation {
            metrics: Metrics {
                n: self.n,
                loss: self.loss_sum / self.n as f64,
                accuracy: self.confusion.accuracy(),
                f1: self.confusion.f1(),
                auroc,
            },
            confusion: self.confusion,
            roc,
        })
    }
}

/// First index of the largest value.
fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn log_sum_exp(row: &[f32]) -> f64 {
    let m = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
    m + row.iter().map(|&v| (v as f64 - m).exp()).sum::<f64>().ln()
}

/// Logits and mean loss for one batch without dropout or gradients.
fn eval_batch(params: &ModelParams, batch: &Batch) -> Result<(Tensor, f64)> {
    let mut tape = Tape::inference();
    let cache = forward(&mut tape, params, &batch.tokens, None)?;
    let z = classify(&mut tape, params, cache.last_hidden)?;
    let l = loss(&mut tape, params, z, &batch.targets)?;
    Ok((tape.to_tensor(z), tape.value(l)[0] as f64))
}

/// Streams `batches` through the model in evaluation mode.
pub fn evaluate(params: &ModelParams, batches: &[Batch]) -> Result<Evaluation> {
    let mut acc = Accumulator::new(params.config().head);
    for b in batches {
        let (z, l) = eval_batch(params, b)?;
        acc.push(&z, &b.targets, l)?;
    }
    acc.finish()
}

/// Batches `examples` in natural order for evaluation.
pub fn eval_batches(examples: &[Example], params: &ModelParams, seq_len: usize, batch_size: usize, pad_id: u32) -> Result<Vec<Batch>> {
    let order: Vec<usize> = (0..examples.len()).collect();
    make_batches(examples, &order, seq_len, batch_size, pad_id, params.config().head)
}

/// One optimization step: zero gradients, forward with dropout, loss,
/// backward, accumulate and update. Returns the batch logits and loss; a
/// non-finite loss skips the update.
pub fn train_step(params: &mut ModelParams, opt: &mut AdamW, batch: &Batch, rng: &mut dyn RngCore) -> Result<(Tensor, f32)> {
    params.zero_grads();
    let (logits, value, grads) = {
        let mut tape = Tape::new();
        let cache = forward(&mut tape, params, &batch.tokens, Some(rng))?;
        let z = classify(&mut tape, params, cache.last_hidden)?;
        let l = loss(&mut tape, params, z, &batch.targets)?;
        let value = tape.value(l)[0];
        if !value.is_finite() {
            return Ok((tape.to_tensor(z), value));
        }
        (tape.to_tensor(z), value, tape.backward(l)?)
    };
    params.accumulate(&grads)?;
    opt.step(params)?;
    Ok((logits, value))
}

/// Applies `cfg.policy` to `params` and trains on `train` for `cfg.epochs`
/// epochs, validating on `val`. `observe` sees each epoch record as it is
/// produced.
pub fn train_with(
    params: &mut ModelParams,
    train: &[Example],
    val: &[Example],
    pad_id: u32,
    cfg: &TrainConfig,
    observe: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::contract("training set is empty"));
    }
    apply_policy(params, &cfg.policy)?;
    let before = params.clone();
    let mut opt = AdamW::new(params, cfg.optimizer)?;
    let head = params.config().head;
    let sampler = match (cfg.balance, head) {
        (true, HeadKind::BinarySigmoid | HeadKind::MultiClassSoftmax { .. }) => {
            let classes = train
                .iter()
                .map(|e| e.label.class().ok_or_else(|| Error::contract(format!("{}: expected a class label", e.note_id))))
                .collect::<Result<Vec<_>>>()?;
            Some(SamplerWeights::from_classes(&classes)?)
        }
        _ => None,
    };
    let draws = cfg.draws_per_epoch.unwrap_or(train.len());
    let val_batches = if val.is_empty() { Vec::new() } else { eval_batches(val, params, cfg.seq_len, cfg.batch_size, pad_id)? };
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(1);

    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = epoch_order(train.len(), sampler.as_ref(), draws, &mut order_rng)?;
        let batches = make_batches(train, &order, cfg.seq_len, cfg.batch_size, pad_id, head)?;
        let start = Instant::now();
        let mut acc = Accumulator::new(head);
        for (bi, batch) in batches.iter().enumerate() {
            let (z, value) = train_step(params, &mut opt, batch, &mut dropout_rng)?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi, value });
            }
            acc.push(&z, &batch.targets, value as f64)?;
        }
        let seconds = start.elapsed().as_secs_f64();
        let train_eval = acc.finish()?;
        let validate = !val_batches.is_empty() && ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs);
        let val_eval = if validate { Some(evaluate(params, &val_batches)?) } else { None };
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: train_eval.metrics.loss,
            train_acc: train_eval.metrics.accuracy,
            val_loss: val_eval.as_ref().map(|e| e.metrics.loss),
            val_acc: val_eval.as_ref().map(|e| e.metrics.accuracy),
            seconds,
        };
        observe(&record);
        records.push(record);
    }
    let frozen_unchanged = params
        .iter()
        .zip(before.iter())
        .all(|((_, now), (_, was))| now.requires_grad() || now.data() == was.data());
    Ok(TrainOutcome { records, steps: opt.steps(), frozen_unchanged })
}

pub fn train(params: &mut ModelParams, train: &[Example], val: &[Example], pad_id: u32, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(params, train, val, pad_id, cfg, &mut |_| {})
}

/// CSV with columns `epoch,train_loss,val_loss,train_acc,val_acc,seconds`;
/// epochs without validation leave the validation cells empty.
pub fn learning_curves_csv(records: &[EpochRecord]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut s = String::from("epoch,train_loss,val_loss,train_acc,val_acc,seconds\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch,
            r.train_loss,
            opt(r.val_loss),
            r.train_acc,
            opt(r.val_acc),
            r.seconds
        ));
    }
    s
}

pub fn export_learning_curves(records: &[EpochRecord], path: &std::path::Path) -> Result<()> {
    std::fs::write(path, learning_curves_csv(records)).map_err(|e| Error::io(path, e))
}

/// Parses a file written by [`export_learning_curves`].
pub fn read_learning_curves(path: &std::path::Path) -> Result<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let bad = |what: &str| Error::contract(format!("{}: bad {what}", path.display()));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| rec.get(i).ok_or_else(|| bad("row")).and_then(|v| v.parse::<f64>().map_err(|_| bad(v)));
        let opt = |i: usize| match rec.get(i) {
            Some("") => Ok(None),
            _ => num(i).map(Some),
        };
        out.push(EpochRecord {
            epoch: rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(|| bad("epoch"))?,
            train_loss: num(1)?,
            val_loss: opt(2)?,
            train_acc: num(3)?,
            val_acc: opt(4)?,
            seconds: num(5)?,
        });
    }
    Ok(out)
}
