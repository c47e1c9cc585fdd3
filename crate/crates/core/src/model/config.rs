use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the classification head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadKind {
    /// One logit scored through a sigmoid.
    BinarySigmoid,
    /// `classes` logits scored through a softmax.
    MultiClassSoftmax { classes: usize },
    /// `labels` independent sigmoid logits.
    MultiLabelSigmoid { labels: usize },
}

impl HeadKind {
    pub fn n_classes(self) -> usize {
        match self {
            HeadKind::BinarySigmoid => 1,
            HeadKind::MultiClassSoftmax { classes } => classes,
            HeadKind::MultiLabelSigmoid { labels } => labels,
        }
    }

    pub fn describe(self) -> String {
        match self {
            HeadKind::BinarySigmoid => "binary-sigmoid".into(),
            HeadKind::MultiClassSoftmax { classes } => format!("softmax:{classes}"),
            HeadKind::MultiLabelSigmoid { labels } => format!("multilabel:{labels}"),
        }
    }

    /// Parses `binary`, `softmax:C` or `multilabel:C`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("unknown head {s:?}; expected binary, softmax:C or multilabel:C"));
        let count = |v: &str| v.parse::<usize>().map_err(|_| bad());
        match s.split_once(':') {
            None if s == "binary" || s == "binary-sigmoid" => Ok(HeadKind::BinarySigmoid),
            Some(("softmax", c)) => Ok(HeadKind::MultiClassSoftmax { classes: count(c)? }),
            Some(("multilabel", c)) => Ok(HeadKind::MultiLabelSigmoid { labels: count(c)? }),
            _ => Err(bad()),
        }
    }
}

fn default_dropout() -> f32 {
    0.1
}

fn default_ln_eps() -> f32 {
    1e-5
}

fn default_head() -> HeadKind {
    HeadKind::MultiClassSoftmax { classes: 2 }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GptConfig {
    pub n_vocab: usize,
    pub n_ctx: usize,
    pub n_embd: usize,
    pub n_head: usize,
    pub n_layer: usize,
    /// Defaults to `4 * n_embd` when absent from a config file.
    #[serde(default)]
    pub d_ff: usize,
    #[serde(default = "default_dropout")]
    pub dropout_p: f32,
    #[serde(default = "default_ln_eps")]
    pub ln_eps: f32,
    #[serde(default = "default_head")]
    pub head: HeadKind,
}

impl GptConfig {
    /// GPT-2 small: 50257 / 1024 / 768 / 12 heads / 12 layers.
    pub fn gpt2_small() -> Self {
        GptConfig {
            n_vocab: 50257,
            n_ctx: 1024,
            n_embd: 768,
            n_head: 12,
            n_layer: 12,
            d_ff: 3072,
            dropout_p: default_dropout(),
            ln_eps: default_ln_eps(),
            head: default_head(),
        }
    }

    /// Desk-scale preset: 256 / 64 / 64 / 4 heads / 2 layers.
    pub fn tiny() -> Self {
        GptConfig {
            n_vocab: 256,
            n_ctx: 64,
            n_embd: 64,
            n_head: 4,
            n_layer: 2,
            d_ff: 256,
            dropout_p: default_dropout(),
            ln_eps: default_ln_eps(),
            head: default_head(),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "gpt2-small" | "gpt2" => Some(Self::gpt2_small()),
            "tiny" => Some(Self::tiny()),
            _ => None,
        }
    }

    /// A preset name, or a path to a JSON config file.
    pub fn resolve(spec: &str) -> Result<Self> {
        if let Some(cfg) = Self::preset(spec) {
            return Ok(cfg);
        }
        let path = Path::new(spec);
        if !path.exists() {
            return Err(Error::config(format!(
                "{spec:?} is neither a preset (gpt2-small, tiny) nor an existing config file"
            )));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: GptConfig = serde_json::from_str(text).map_err(|e| Error::json("model config", e))?;
        if cfg.d_ff == 0 {
            cfg.d_ff = 4 * cfg.n_embd;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_head(mut self, head: HeadKind) -> Self {
        self.head = head;
        self
    }

    pub fn n_classes(&self) -> usize {
        self.head.n_classes()
    }

    pub fn head_dim(&self) -> usize {
        self.n_embd / self.n_head
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_vocab == 0 || self.n_ctx == 0 || self.n_embd == 0 || self.n_head == 0 {
            return fail("n_vocab, n_ctx, n_embd and n_head must be positive".into());
        }
        if self.n_embd % self.n_head != 0 {
            return fail(format!("n_embd {} is not divisible by n_head {}", self.n_embd, self.n_head));
        }
        if self.d_ff == 0 {
            return fail("d_ff must be positive".into());
        }
        if self.n_classes() == 0 {
            return fail("the head needs at least one class".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return fail(format!("dropout_p {} outside [0, 1)", self.dropout_p));
        }
        if !(self.ln_eps >= 0.0) {
            return fail(format!("ln_eps {} must be nonnegative", self.ln_eps));
        }
        Ok(())
    }
}
