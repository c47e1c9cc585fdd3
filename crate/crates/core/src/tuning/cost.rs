use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Component, GptConfig};
use crate::tuning::FreezePolicy;

/// FLOP estimate for one optimizer step; a multiply-add counts as 2 FLOPs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StepCost {
    pub forward_flops: u64,
    pub backward_flops: u64,
}

impl StepCost {
    pub fn total(&self) -> u64 {
        self.forward_flops + self.backward_flops
    }
}

/// `8BTd² + 4BT²d + 4BTd·d_ff`: Q/K/V/output projections, attention scores
/// and context, and the two feed-forward layers.
pub fn block_forward_flops(b: u64, t: u64, d: u64, d_ff: u64) -> u64 {
    8 * b * t * d * d + 4 * b * t * t * d + 4 * b * t * d * d_ff
}

/// Number of blocks the backward pass must traverse: everything from the
/// lowest trainable block (or the embeddings) upward.
pub fn backward_blocks(cfg: &GptConfig, policy: &FreezePolicy) -> Result<usize> {
    let flags = policy.resolve(cfg)?;
    let mut lowest = None;
    for (spec, f) in cfg.param_specs().iter().zip(flags) {
        if !f {
            continue;
        }
        let level = match spec.component {
            Component::TokenEmbedding | Component::PositionEmbedding => Some(0),
            _ => spec.block,
        };
        if let Some(l) = level {
            lowest = Some(lowest.map_or(l, |m: usize| m.min(l)));
        }
    }
    Ok(lowest.map_or(0, |l| cfg.n_layer - l))
}

pub fn estimate_step_cost(cfg: &GptConfig, policy: &FreezePolicy, batch: usize, seq: usize) -> Result<StepCost> {
    if seq > cfg.n_ctx {
        return Err(Error::ContextLength { len: seq, n_ctx: cfg.n_ctx });
    }
    if batch == 0 || seq == 0 {
        return Ok(StepCost { forward_flops: 0, backward_flops: 0 });
    }
    let (b, t, d, dff) = (batch as u64, seq as u64, cfg.n_embd as u64, cfg.d_ff as u64);
    let block = block_forward_flops(b, t, d, dff);
    let embed = b * t * d;
    let head = 2 * b * d * cfg.n_classes() as u64;
    let forward = cfg.n_layer as u64 * block + embed + head;
    let backward = 2 * backward_blocks(cfg, policy)? as u64 * block + 2 * head;
    Ok(StepCost { forward_flops: forward, backward_flops: backward })
}
