//! The named parameter map induced by a [`GptConfig`].

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::Gradients;
use crate::error::{Error, Result};
use crate::model::GptConfig;
use crate::tensor::Tensor;

/// Which architectural component a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Component {
    TokenEmbedding,
    PositionEmbedding,
    Attention,
    FeedForward,
    BlockNorm,
    FinalNorm,
    Head,
}

/// Role of a tensor within its component.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    Embedding,
    Weight,
    Bias,
    NormScale,
    NormShift,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub component: Component,
    pub role: ParamRole,
    pub block: Option<usize>,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Bias vectors of the attention and feed-forward projections.
    pub fn is_projection_bias(&self) -> bool {
        self.role == ParamRole::Bias && matches!(self.component, Component::Attention | Component::FeedForward)
    }

    /// Rank-2 tensors are the ones that receive weight decay.
    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }
}

/// Tensor indices of one transformer block.
#[derive(Clone, Copy, Debug)]
pub struct BlockLayout {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Clone, Debug)]
pub struct Layout {
    pub wte: usize,
    pub wpe: usize,
    pub blocks: Vec<BlockLayout>,
    pub lnf_g: usize,
    pub lnf_b: usize,
    pub head_w: usize,
    pub head_b: usize,
}

const BLOCK_TENSORS: usize = 16;

impl GptConfig {
    /// Every parameter in canonical order: embeddings, blocks, final norm, head.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let (d, dff) = (self.n_embd, self.d_ff);
        let spec = |name: String, shape: Vec<usize>, component, role, block| ParamSpec { name, shape, component, role, block };
        let mut out = vec![
            spec("wte".into(), vec![self.n_vocab, d], Component::TokenEmbedding, ParamRole::Embedding, None),
            spec("wpe".into(), vec![self.n_ctx, d], Component::PositionEmbedding, ParamRole::Embedding, None),
        ];
        for b in 0..self.n_layer {
            let n = |s: &str| format!("blocks.{b}.{s}");
            use Component::*;
            use ParamRole::*;
            out.extend([
                spec(n("ln1.g"), vec![d], BlockNorm, NormScale, Some(b)),
                spec(n("ln1.b"), vec![d], BlockNorm, NormShift, Some(b)),
                spec(n("attn.wq"), vec![d, d], Attention, Weight, Some(b)),
                spec(n("attn.bq"), vec![d], Attention, Bias, Some(b)),
                spec(n("attn.wk"), vec![d, d], Attention, Weight, Some(b)),
                spec(n("attn.bk"), vec![d], Attention, Bias, Some(b)),
                spec(n("attn.wv"), vec![d, d], Attention, Weight, Some(b)),
                spec(n("attn.bv"), vec![d], Attention, Bias, Some(b)),
                spec(n("attn.wo"), vec![d, d], Attention, Weight, Some(b)),
                spec(n("attn.bo"), vec![d], Attention, Bias, Some(b)),
                spec(n("ln2.g"), vec![d], BlockNorm, NormScale, Some(b)),
                spec(n("ln2.b"), vec![d], BlockNorm, NormShift, Some(b)),
                spec(n("ffn.w1"), vec![d, dff], FeedForward, Weight, Some(b)),
                spec(n("ffn.b1"), vec![dff], FeedForward, Bias, Some(b)),
                spec(n("ffn.w2"), vec![dff, d], FeedForward, Weight, Some(b)),
                spec(n("ffn.b2"), vec![d], FeedForward, Bias, Some(b)),
            ]);
        }
        let c = self.n_classes();
        out.extend([
            spec("lnf.g".into(), vec![d], Component::FinalNorm, ParamRole::NormScale, None),
            spec("lnf.b".into(), vec![d], Component::FinalNorm, ParamRole::NormShift, None),
            spec("head.w".into(), vec![c, d], Component::Head, ParamRole::Weight, None),
            spec("head.b".into(), vec![c], Component::Head, ParamRole::Bias, None),
        ]);
        out
    }

    pub fn layout(&self) -> Layout {
        let blocks = (0..self.n_layer)
            .map(|b| {
                let o = 2 + b * BLOCK_TENSORS;
                BlockLayout {
                    ln1_g: o,
                    ln1_b: o + 1,
                    wq: o + 2,
                    bq: o + 3,
                    wk: o + 4,
                    bk: o + 5,
                    wv: o + 6,
                    bv: o + 7,
                    wo: o + 8,
                    bo: o + 9,
                    ln2_g: o + 10,
                    ln2_b: o + 11,
                    w1: o + 12,
                    b1: o + 13,
                    w2: o + 14,
                    b2: o + 15,
                }
            })
            .collect();
        let tail = 2 + self.n_layer * BLOCK_TENSORS;
        Layout {
            wte: 0,
            wpe: 1,
            blocks,
            lnf_g: tail,
            lnf_b: tail + 1,
            head_w: tail + 2,
            head_b: tail + 3,
        }
    }
}

/// All model tensors, addressable by name or by canonical index.
#[derive(Clone, Debug)]
pub struct ModelParams {
    cfg: GptConfig,
    specs: Vec<ParamSpec>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
    layout: Layout,
}

impl ModelParams {
    /// All-zero parameters (LayerNorm scales included).
    pub fn zeros(cfg: &GptConfig) -> Result<Self> {
        cfg.validate()?;
        let specs = cfg.param_specs();
        let tensors = specs.iter().map(|s| Tensor::zeros(&s.shape)).collect();
        Ok(Self::assemble(cfg.clone(), specs, tensors))
    }

    /// Weights ~ N(0, 0.02²); biases and norm shifts 0; norm scales 1. The
    /// residual output projections (`attn.wo`, `ffn.w2`) are further scaled
    /// by `1/sqrt(2 L)`.
    pub fn init<R: Rng + ?Sized>(cfg: &GptConfig, rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(cfg)?;
        let normal = Normal::new(0.0f32, 0.02).expect("valid std");
        let residual_scale = 1.0 / ((2 * cfg.n_layer.max(1)) as f32).sqrt();
        for (spec, t) in params.specs.iter().zip(params.tensors.iter_mut()) {
            match spec.role {
                ParamRole::Embedding | ParamRole::Weight => {
                    let scale = if spec.name.ends_with("attn.wo") || spec.name.ends_with("ffn.w2") {
                        residual_scale
                    } else {
                        1.0
                    };
                    for v in t.data_mut() {
                        *v = normal.sample(rng) * scale;
                    }
                }
                ParamRole::NormScale => t.data_mut().iter_mut().for_each(|v| *v = 1.0),
                ParamRole::Bias | ParamRole::NormShift => {}
            }
        }
        Ok(params)
    }

    /// Assembles parameters from named tensors; the name set and every shape
    /// must match `cfg` exactly.
    pub fn from_named(cfg: &GptConfig, mut named: HashMap<String, Tensor>) -> Result<Self> {
        cfg.validate()?;
        let specs = cfg.param_specs();
        let mut tensors = Vec::with_capacity(specs.len());
        for spec in &specs {
            let t = named
                .remove(&spec.name)
                .ok_or_else(|| Error::config(format!("missing tensor {}", spec.name)))?;
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::Shape { op: "from_named", lhs: spec.shape.clone(), rhs: t.shape().to_vec() });
            }
            tensors.push(t);
        }
        if let Some(extra) = named.keys().next() {
            return Err(Error::config(format!("unexpected tensor {extra}")));
        }
        Ok(Self::assemble(cfg.clone(), specs, tensors))
    }

    fn assemble(cfg: GptConfig, specs: Vec<ParamSpec>, tensors: Vec<Tensor>) -> Self {
        let index = specs.iter().enumerate().map(|(i, s)| (s.name.clone(), i)).collect();
        let layout = cfg.layout();
        ModelParams { cfg, specs, tensors, index, layout }
    }

    pub fn config(&self) -> &GptConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(move |i| &mut self.tensors[i])
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamSpec, &Tensor)> {
        self.specs.iter().zip(&self.tensors)
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&ParamSpec, &mut Tensor)> {
        self.specs.iter().zip(self.tensors.iter_mut())
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn trainable_names(&self) -> Vec<&str> {
        self.iter().filter(|(_, t)| t.requires_grad()).map(|(s, _)| s.name.as_str()).collect()
    }

    /// Adds parameter gradients from a backward pass into the owning tensors.
    /// Frozen tensors ignore their share.
    pub fn accumulate(&mut self, grads: &Gradients) -> Result<()> {
        for (key, g) in grads.params() {
            let t = self
                .tensors
                .get_mut(key)
                .ok_or_else(|| Error::contract(format!("gradient for unknown parameter {key}")))?;
            t.accumulate_grad(g)?;
        }
        Ok(())
    }

    /// Zeroes every trainable gradient; frozen tensors are untouched.
    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Copies values (not trainability) from `other`, which must share the config.
    pub fn copy_values_from(&mut self, other: &ModelParams) -> Result<()> {
        if self.specs != other.specs {
            return Err(Error::config("parameter layouts differ"));
        }
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    /// Bitwise equality of all tensor values.
    pub fn values_equal(&self, other: &ModelParams) -> bool {
        self.specs == other.specs
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()))
    }
}
