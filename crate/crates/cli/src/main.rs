use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod args;
mod commands;
mod manifest;

use args::*;
use manifest::{RunLog, RunManifest};

#[derive(Parser)]
#[command(name = "seltune", version, about = "Weak labeling, selective fine-tuning and evaluation of a small GPT classifier")]
struct Cli {
    /// Where to write the run manifest (default: beside the primary output).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label radiology reports with per-condition positive/negative/uncertain states.
    Label(LabelArgs),
    /// Tabulate label prevalence under the pos-only and pos-or-uncertain schemes.
    Prevalence(PrevalenceArgs),
    /// Write seeded 70/10/20 train/validation/test id manifests.
    Split(SplitArgs),
    /// Fine-tune a model on a labeled dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a labeled dataset.
    Eval(EvalArgs),
    /// Print the per-component parameter ledger.
    CountParams(CountParamsArgs),
    /// Train several freeze policies from one initialization and tabulate the results.
    Compare(CompareArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Learn a BPE vocabulary from report texts.
    TrainTokenizer(TrainTokenizerArgs),
    /// Generate template radiology reports.
    Synth(SynthArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Label(_) => "label",
            Command::Prevalence(_) => "prevalence",
            Command::Split(_) => "split",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::CountParams(_) => "count-params",
            Command::Compare(_) => "compare",
            Command::Gradcheck(_) => "gradcheck",
            Command::TrainTokenizer(_) => "train-tokenizer",
            Command::Synth(_) => "synth",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    let mut manifest = RunManifest::start(name, std::env::args().collect());
    let mut log = RunLog::default();
    let result = match &cli.command {
        Command::Label(a) => commands::label(a, &mut log),
        Command::Prevalence(a) => commands::prevalence(a, &mut log),
        Command::Split(a) => commands::split(a, &mut log),
        Command::Train(a) => commands::train(a, &mut log),
        Command::Eval(a) => commands::eval(a, &mut log),
        Command::CountParams(a) => commands::count_params(a, &mut log),
        Command::Compare(a) => commands::compare(a, &mut log),
        Command::Gradcheck(a) => commands::gradcheck(a, &mut log),
        Command::TrainTokenizer(a) => commands::train_tokenizer(a, &mut log),
        Command::Synth(a) => commands::synth(a, &mut log),
    };
    let path = cli
        .manifest
        .clone()
        .or_else(|| log.manifest_path.clone())
        .unwrap_or_else(|| PathBuf::from(format!("seltune-{name}.manifest.json")));
    manifest.finish(log, &result);
    if let Err(e) = manifest.write(&path) {
        eprintln!("warning: could not write run manifest {}: {e:#}", path.display());
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
