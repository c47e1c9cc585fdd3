//! Compares tape gradients (32-bit) against central differences of the
//! 64-bit reference forward pass.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::model::{self, HeadKind, ModelParams, ParamRole, Targets, TokenBatch};
use crate::reference::{self, RefParams};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Elements sampled per trainable tensor.
    pub samples_per_tensor: usize,
    /// Central-difference step.
    pub step: f64,
    /// Pass threshold on `|analytic − numeric| / max(1, |analytic|)`.
    pub tolerance: f64,
    /// Adds a constant to one tensor's analytic gradient before comparison.
    /// Used to confirm the check can fail.
    pub corrupt: Option<(String, f32)>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { samples_per_tensor: 12, step: 1e-3, tolerance: 1e-3, corrupt: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// A small random batch (one padded row) with targets matching the head.
pub fn random_problem(params: &ModelParams, batch: usize, seq: usize, seed: u64) -> Result<(TokenBatch, Targets)> {
    let cfg = params.config();
    let seq = seq.min(cfg.n_ctx);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pad = (cfg.n_vocab - 1) as u32;
    let rows: Vec<Vec<u32>> = (0..batch)
        .map(|b| {
            let len = if b == 0 { seq } else { rng.random_range(1..=seq) };
            (0..len).map(|_| rng.random_range(0..pad.max(1))).collect()
        })
        .collect();
    let mut tb = TokenBatch::from_rows(&rows, pad)?;
    if tb.seq < seq {
        // Keep the requested width even if every row came out short.
        let mut wide = Vec::with_capacity(batch * seq);
        let mut mask = Vec::with_capacity(batch * seq);
        for b in 0..batch {
            wide.extend_from_slice(tb.row_ids(b));
            wide.resize((b + 1) * seq, pad);
            mask.extend_from_slice(tb.row_mask(b));
            mask.resize((b + 1) * seq, 0);
        }
        tb = TokenBatch::new(batch, seq, wide, mask)?;
    }
    let targets = match cfg.head {
        HeadKind::MultiClassSoftmax { classes } => Targets::Classes((0..batch).map(|_| rng.random_range(0..classes)).collect()),
        head => Targets::Binary((0..batch * head.n_classes()).map(|_| rng.random_range(0..2) as f32).collect()),
    };
    Ok((tb, targets))
}

/// Analytic parameter gradients from one tape backward pass, by canonical index.
pub fn analytic_gradients(params: &ModelParams, batch: &TokenBatch, targets: &Targets) -> Result<Vec<Option<Vec<f32>>>> {
    let mut tape = Tape::new();
    let cache = model::forward(&mut tape, params, batch, None)?;
    let logits = model::classify(&mut tape, params, cache.last_hidden)?;
    let loss = model::loss(&mut tape, params, logits, targets)?;
    let grads = tape.backward(loss)?;
    let mut out = vec![None; params.len()];
    for (key, g) in grads.params() {
        out[key] = Some(g.to_vec());
    }
    Ok(out)
}

/// Checks every trainable tensor of `params` (trainability as currently set)
/// and verifies that frozen tensors receive no gradient.
pub fn gradcheck(
    params: &ModelParams,
    batch: &TokenBatch,
    targets: &Targets,
    opts: &GradCheckOptions,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut analytic = analytic_gradients(params, batch, targets)?;
    if let Some((name, offset)) = &opts.corrupt {
        let i = params.index_of(name).ok_or_else(|| Error::config(format!("unknown tensor {name}")))?;
        if let Some(g) = analytic[i].as_mut() {
            g.iter_mut().for_each(|v| *v += offset);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = RefParams::from_params(params);
    let mut tensors = Vec::new();
    for (i, (spec, t)) in params.iter().enumerate() {
        if !t.requires_grad() {
            if analytic[i].is_some() {
                return Err(Error::contract(format!("frozen tensor {} received a gradient", spec.name)));
            }
            continue;
        }
        let g = analytic[i]
            .as_ref()
            .ok_or_else(|| Error::contract(format!("trainable tensor {} received no gradient", spec.name)))?;
        let candidates: Vec<usize> = if spec.role == ParamRole::Embedding {
            // Rows never looked up have an exactly zero gradient; probe touched rows.
            let d = spec.shape[1];
            let rows: Vec<usize> = if spec.name == "wte" {
                let mut r: Vec<usize> = batch.ids.iter().map(|&id| id as usize).collect();
                r.sort_unstable();
                r.dedup();
                r
            } else {
                (0..batch.seq).collect()
            };
            rows.iter().flat_map(|&r| r * d..(r + 1) * d).collect()
        } else {
            (0..t.numel()).collect()
        };
        let k = opts.samples_per_tensor.min(candidates.len());
        let mut max_rel: f64 = 0.0;
        for pick in sample(&mut rng, candidates.len(), k) {
            let e = candidates[pick];
            let orig = probe.tensors[i][e];
            probe.tensors[i][e] = orig + opts.step;
            let up = reference::loss(&probe, batch, targets)?;
            probe.tensors[i][e] = orig - opts.step;
            let down = reference::loss(&probe, batch, targets)?;
            probe.tensors[i][e] = orig;
            let numeric = (up - down) / (2.0 * opts.step);
            let a = g[e] as f64;
            max_rel = max_rel.max((a - numeric).abs() / a.abs().max(1.0));
        }
        tensors.push(TensorCheck { name: spec.name.clone(), checked: k, max_rel_err: max_rel });
    }
    let max_rel_err = tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport { tensors, max_rel_err, tolerance: opts.tolerance, passed: max_rel_err < opts.tolerance })
}
