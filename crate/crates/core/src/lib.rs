// `is_multiple_of` is newer than the supported toolchain; negated float
// comparisons are deliberate so that NaN fails validation.
#![allow(clippy::manual_is_multiple_of, clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod labeler;
pub mod model;
pub mod reference;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod tuning;

pub use error::{CheckpointError, Error, Result};
pub use model::{GptConfig, HeadKind, ModelParams, TokenBatch};
pub use tensor::Tensor;
