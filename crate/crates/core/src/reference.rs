//! A 64-bit forward pass written with plain loops, independent of the tape.
//! It serves as the oracle for gradient checks and forward-pass tests.

use crate::autodiff::{bce_term, MASK_SENTINEL};
use crate::error::{Error, Result};
use crate::model::{GptConfig, HeadKind, ModelParams, Targets, TokenBatch};

/// Parameter values widened to `f64`, in canonical order.
#[derive(Clone, Debug)]
pub struct RefParams {
    pub cfg: GptConfig,
    pub tensors: Vec<Vec<f64>>,
}

impl RefParams {
    pub fn from_params(params: &ModelParams) -> Self {
        RefParams {
            cfg: params.config().clone(),
            tensors: params.iter().map(|(_, t)| t.data().iter().map(|&v| v as f64).collect()).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RefOutput {
    /// `[B×T×d]` after each block.
    pub block_outputs: Vec<Vec<f64>>,
    /// `[B×T×d]` after the final layer norm.
    pub hidden: Vec<f64>,
    /// `[B×d]`
    pub last_hidden: Vec<f64>,
    /// `[B×C]`
    pub logits: Vec<f64>,
}

fn layer_norm(x: &[f64], g: &[f64], b: &[f64], eps: f64) -> Vec<f64> {
    let d = g.len();
    let mut out = vec![0.0; x.len()];
    for (row, o) in x.chunks(d).zip(out.chunks_mut(d)) {
        let mu = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / d as f64;
        for i in 0..d {
            o[i] = (row[i] - mu) / (var + eps).sqrt() * g[i] + b[i];
        }
    }
    out
}

/// `x[rows×k] · w[k×n] + b`
fn linear(x: &[f64], w: &[f64], b: &[f64], k: usize, n: usize) -> Vec<f64> {
    let rows = x.len() / k;
    let mut out = vec![0.0; rows * n];
    for r in 0..rows {
        for j in 0..n {
            let mut s = b[j];
            for i in 0..k {
                s += x[r * k + i] * w[i * n + j];
            }
            out[r * n + j] = s;
        }
    }
    out
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

/// Per-head scaled dot-product attention with causal and padding masks.
/// `q`, `k`, `v` are `[B×T×d]`; returns the concatenated head contexts.
#[allow(clippy::too_many_arguments)]
pub fn attention(q: &[f64], k: &[f64], v: &[f64], mask: &[u8], b: usize, t: usize, d: usize, heads: usize) -> Vec<f64> {
    let dk = d / heads;
    let mut out = vec![0.0; b * t * d];
    for bi in 0..b {
        for h in 0..heads {
            for i in 0..t {
                let mut scores = vec![0.0; t];
                for (j, s) in scores.iter_mut().enumerate() {
                    let mut dot = 0.0;
                    for c in 0..dk {
                        dot += q[(bi * t + i) * d + h * dk + c] * k[(bi * t + j) * d + h * dk + c];
                    }
                    *s = dot / (dk as f64).sqrt();
                    if j > i || mask[bi * t + j] == 0 {
                        *s += MASK_SENTINEL as f64;
                    }
                }
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
                for (j, s) in scores.iter().enumerate() {
                    let w = (s - max).exp() / z;
                    for c in 0..dk {
                        out[(bi * t + i) * d + h * dk + c] += w * v[(bi * t + j) * d + h * dk + c];
                    }
                }
            }
        }
    }
    out
}

/// Deterministic forward pass (no dropout).
pub fn forward(p: &RefParams, batch: &TokenBatch) -> Result<RefOutput> {
    let cfg = &p.cfg;
    let (b, t, d, dff) = (batch.batch, batch.seq, cfg.n_embd, cfg.d_ff);
    if t > cfg.n_ctx {
        return Err(Error::ContextLength { len: t, n_ctx: cfg.n_ctx });
    }
    let last = batch.last_indices()?;
    let layout = cfg.layout();
    let eps = cfg.ln_eps as f64;
    let tp = |i: usize| p.tensors[i].as_slice();

    let mut x = vec![0.0; b * t * d];
    for bi in 0..b {
        for ti in 0..t {
            let id = batch.ids[bi * t + ti] as usize;
            if id >= cfg.n_vocab {
                return Err(Error::Index { index: id, extent: cfg.n_vocab });
            }
            for c in 0..d {
                x[(bi * t + ti) * d + c] = tp(layout.wte)[id * d + c] + tp(layout.wpe)[ti * d + c];
            }
        }
    }

    let mut block_outputs = Vec::with_capacity(cfg.n_layer);
    for l in &layout.blocks {
        let n1 = layer_norm(&x, tp(l.ln1_g), tp(l.ln1_b), eps);
        let q = linear(&n1, tp(l.wq), tp(l.bq), d, d);
        let k = linear(&n1, tp(l.wk), tp(l.bk), d, d);
        let v = linear(&n1, tp(l.wv), tp(l.bv), d, d);
        let ctx = attention(&q, &k, &v, &batch.mask, b, t, d, cfg.n_head);
        let a = linear(&ctx, tp(l.wo), tp(l.bo), d, d);
        let x1: Vec<f64> = x.iter().zip(&a).map(|(u, w)| u + w).collect();
        let n2 = layer_norm(&x1, tp(l.ln2_g), tp(l.ln2_b), eps);
        let u: Vec<f64> = linear(&n2, tp(l.w1), tp(l.b1), d, dff).into_iter().map(gelu).collect();
        let f = linear(&u, tp(l.w2), tp(l.b2), dff, d);
        x = x1.iter().zip(&f).map(|(u, w)| u + w).collect();
        block_outputs.push(x.clone());
    }

    let hidden = layer_norm(&x, tp(layout.lnf_g), tp(layout.lnf_b), eps);
    let mut last_hidden = Vec::with_capacity(b * d);
    for (bi, &ti) in last.iter().enumerate() {
        last_hidden.extend_from_slice(&hidden[(bi * t + ti) * d..(bi * t + ti + 1) * d]);
    }
    let c = cfg.n_classes();
    let (hw, hb) = (tp(layout.head_w), tp(layout.head_b));
    let mut logits = vec![0.0; b * c];
    for bi in 0..b {
        for j in 0..c {
            let mut s = hb[j];
            for i in 0..d {
                s += last_hidden[bi * d + i] * hw[j * d + i];
            }
            logits[bi * c + j] = s;
        }
    }
    Ok(RefOutput { block_outputs, hidden, last_hidden, logits })
}

/// Batch loss computed from `f64` logits, matching the tape's loss for the head.
pub fn loss_from_logits(head: HeadKind, logits: &[f64], targets: &Targets) -> Result<f64> {
    let c = head.n_classes();
    match (head, targets) {
        (HeadKind::MultiClassSoftmax { .. }, Targets::Classes(y)) => {
            let mut total = 0.0;
            for (row, &yi) in logits.chunks(c).zip(y) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
                total += lse - row[yi];
            }
            Ok(total / y.len() as f64)
        }
        (HeadKind::BinarySigmoid | HeadKind::MultiLabelSigmoid { .. }, Targets::Binary(y)) => {
            let total: f64 = logits.iter().zip(y).map(|(&z, &yi)| bce_term(z, yi as f64)).sum();
            Ok(total / (logits.len() / c) as f64)
        }
        _ => Err(Error::contract("targets do not match the head")),
    }
}

pub fn loss(p: &RefParams, batch: &TokenBatch, targets: &Targets) -> Result<f64> {
    let out = forward(p, batch)?;
    loss_from_logits(p.cfg.head, &out.logits, targets)
}
