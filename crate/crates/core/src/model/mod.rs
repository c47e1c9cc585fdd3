//! Decoder-only transformer classifier: configuration, parameters, forward
//! pass and checkpoints.

pub mod checkpoint;
mod config;
pub mod gpt;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{GptConfig, HeadKind};
pub use gpt::{classify, forward, loss, predict_logits, ActivationCache, Targets, TokenBatch};
pub use params::{BlockLayout, Component, Layout, ModelParams, ParamRole, ParamSpec};
