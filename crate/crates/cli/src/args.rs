use std::path::PathBuf;

use clap::Args;

#[derive(Args)]
pub struct LabelArgs {
    /// Reports as JSONL or CSV with note_id, subject_id, hadm_id and text.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Labeler rules as JSON (default: built-in rules).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output format: jsonl or csv (default: from the output extension).
    #[arg(long)]
    pub format: Option<String>,
    /// Copy the report text into the output.
    #[arg(long)]
    pub with_text: bool,
    /// Exit nonzero if any row fails.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args)]
pub struct PrevalenceArgs {
    /// Labeler output (JSONL or CSV).
    #[arg(long)]
    pub input: PathBuf,
    /// Also write the table as CSV.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct SplitArgs {
    /// Any JSONL or CSV file with a note_id column.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Settings shared by `train` and `compare`. Unset flags fall back to the
/// `--config` file, then to built-in defaults.
#[derive(Args, Clone)]
pub struct RunOptions {
    /// Labeled data (JSONL or CSV).
    #[arg(long)]
    pub data: PathBuf,
    /// binary, multiclass4 or multilabel13 [default: binary]
    #[arg(long)]
    pub task: Option<String>,
    /// Label column in labeler output, or a scheme (bin_posonly, bin_pos_or_unc) for multilabel13.
    #[arg(long)]
    pub target: Option<String>,
    /// Training epochs [default: 10]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Batch size [default: 8]
    #[arg(long)]
    pub batch: Option<usize>,
    /// Learning rate [default: per policy]
    #[arg(long)]
    pub lr: Option<f32>,
    /// Decoupled weight decay [default: per policy]
    #[arg(long)]
    pub wd: Option<f32>,
    /// Seed for initialization, splitting, sampling and dropout [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Tokens per example [default: min(1024, context length)]
    #[arg(long)]
    pub seq_len: Option<usize>,
    /// Preset (gpt2-small, tiny) or JSON config path [default: gpt2-small]
    #[arg(long)]
    pub model_cfg: Option<String>,
    /// Head override: binary, softmax:C or multilabel:C [default: from the task]
    #[arg(long)]
    pub head: Option<String>,
    /// Tokenizer JSON; without it one is trained on the training split.
    #[arg(long)]
    pub tokenizer: Option<PathBuf>,
    /// Directory with train_ids.txt / val_ids.txt / test_ids.txt (default: seeded split).
    #[arg(long)]
    pub split_dir: Option<PathBuf>,
    /// Disable inverse-frequency class sampling.
    #[arg(long)]
    pub no_balance: bool,
    /// JSON file of settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunOptions,
    /// head-only, selective, full or custom:PATTERNS [default: selective]
    #[arg(long)]
    pub policy: Option<String>,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub checkpoint_in: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint_out: PathBuf,
    /// Learning-curve CSV [default: <checkpoint-out>.curves.csv]
    #[arg(long)]
    pub curves_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Checkpoint written by `train` (its .config.json and .tokenizer.json sidecars are read too).
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for metrics.csv, confusion.csv and roc.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Only evaluate notes listed in this id manifest.
    #[arg(long)]
    pub ids: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
}

#[derive(Args)]
pub struct CountParamsArgs {
    /// Preset (gpt2-small, tiny) or JSON config path.
    #[arg(long, default_value = "gpt2-small")]
    pub model_cfg: String,
    /// Policies to tabulate, comma separated.
    #[arg(long, default_value = "head-only,selective,full")]
    pub policy: String,
    /// compact (alias paper: token table only, no projection biases) or full (every tensor).
    #[arg(long, default_value = "compact")]
    pub convention: String,
    #[arg(long)]
    pub head: Option<String>,
    /// Print CSV instead of an aligned table.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub run: RunOptions,
    /// Comma-separated freeze policies.
    #[arg(long, default_value = "head-only,selective,full")]
    pub strategies: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "tiny")]
    pub model_cfg: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
    /// Policies to check, comma separated.
    #[arg(long, default_value = "head-only,selective,full")]
    pub policy: String,
    #[arg(long)]
    pub head: Option<String>,
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
    #[arg(long, default_value_t = 8)]
    pub seq: usize,
    /// Elements sampled per tensor.
    #[arg(long, default_value_t = 12)]
    pub samples: usize,
}

#[derive(Args)]
pub struct TrainTokenizerArgs {
    /// Reports (JSONL or CSV) with a text column.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub vocab_size: usize,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub reports: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSONL of reports.
    #[arg(long)]
    pub output: PathBuf,
}
