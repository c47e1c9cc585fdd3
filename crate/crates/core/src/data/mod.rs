//! Tokenization, labeled datasets, splits and batching.

mod batching;
mod bpe;
mod dataset;

pub use batching::{
    epoch_order, make_batches, pad_truncate, random_split, split_sizes, targets_for, weighted_sample, Batch, SamplerWeights,
    Split,
};
pub use bpe::{escape_bytes, unescape_bytes, units, Tokenizer, EOS_TOKEN, PAD_TOKEN};
pub use dataset::{
    read_id_manifest, read_labeled, row_label, tokenize, write_split_manifests, Example, Label, RawExample, Task,
    MULTILABEL_WIDTH,
};
