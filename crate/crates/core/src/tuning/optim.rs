use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tuning::FreezePolicy;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerHp {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
}

impl Default for OptimizerHp {
    fn default() -> Self {
        OptimizerHp { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

impl OptimizerHp {
    /// Head-only 5e-4, full 2e-5, selective (and custom) 5e-5 with decay 0.1.
    pub fn for_policy(policy: &FreezePolicy) -> Self {
        let base = OptimizerHp::default();
        match policy {
            FreezePolicy::HeadOnly => OptimizerHp { lr: 5e-4, ..base },
            FreezePolicy::Full => OptimizerHp { lr: 2e-5, ..base },
            FreezePolicy::Selective | FreezePolicy::Custom(_) => OptimizerHp { lr: 5e-5, weight_decay: 0.1, ..base },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::config(format!("learning rate {} must be positive", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("betas must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) || !(self.eps >= 0.0) {
            return Err(Error::config("weight decay and eps must be nonnegative"));
        }
        Ok(())
    }
}

/// AdamW with decoupled weight decay. Moments exist only for tensors that
/// were trainable when the optimizer was created.
#[derive(Clone, Debug)]
pub struct AdamW {
    hp: OptimizerHp,
    step: u64,
    moments: Vec<Option<(Vec<f32>, Vec<f32>)>>,
}

impl AdamW {
    pub fn new(params: &ModelParams, hp: OptimizerHp) -> Result<Self> {
        hp.validate()?;
        let moments = params
            .iter()
            .map(|(_, t)| t.requires_grad().then(|| (vec![0.0; t.numel()], vec![0.0; t.numel()])))
            .collect();
        Ok(AdamW { hp, step: 0, moments })
    }

    pub fn hp(&self) -> &OptimizerHp {
        &self.hp
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every trainable tensor from its stored gradient. Weight
    /// decay applies to rank-2 tensors only.
    pub fn step(&mut self, params: &mut ModelParams) -> Result<()> {
        if params.len() != self.moments.len() {
            return Err(Error::contract("optimizer state does not match the parameters"));
        }
        for ((spec, t), state) in params.iter().zip(&self.moments) {
            if t.requires_grad() != state.is_some() {
                return Err(Error::contract(format!("trainability of {} changed after optimizer creation", spec.name)));
            }
            if t.requires_grad() && t.grad().is_none() {
                return Err(Error::contract(format!("trainable tensor {} has no gradient", spec.name)));
            }
        }
        self.step += 1;
        let hp = self.hp;
        let bc1 = (1.0 - (hp.beta1 as f64).powi(self.step as i32)) as f32;
        let bc2 = (1.0 - (hp.beta2 as f64).powi(self.step as i32)) as f32;
        for ((spec, t), state) in params.iter_mut().zip(&mut self.moments) {
            let Some((m, v)) = state else { continue };
            let decay = if spec.is_matrix() { hp.lr * hp.weight_decay } else { 0.0 };
            let (theta, grad) = t.data_and_grad_mut();
            let grad = grad.expect("checked above");
            for i in 0..theta.len() {
                let g = grad[i];
                m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
                v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps) + decay * theta[i];
            }
        }
        Ok(())
    }
}

/// Zeroes every trainable gradient; frozen tensors are untouched.
pub fn zero_grads(params: &mut ModelParams) {
    params.zero_grads();
}
