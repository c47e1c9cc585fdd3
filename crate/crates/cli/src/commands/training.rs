use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use seltune::data::{random_split, read_id_manifest, read_labeled, tokenize, Example, RawExample, Split, Task, Tokenizer};
use seltune::model::{load_checkpoint, save_checkpoint};
use seltune::train::{
    compare_strategies_with, eval_batches, evaluate, learning_curves_csv, roc_csv, train_with, EpochRecord, Evaluation,
    SplitData, Strategy, TrainConfig,
};
use seltune::tuning::{FreezePolicy, OptimizerHp};
use seltune::{GptConfig, HeadKind, ModelParams};

use super::{ensure_parent, split_list, write_file};
use crate::args::{CompareArgs, EvalArgs, RunOptions, TrainArgs};
use crate::manifest::RunLog;

/// Settings accepted in a `--config` file; every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SettingsFile {
    task: Option<String>,
    target: Option<String>,
    policy: Option<String>,
    epochs: Option<usize>,
    batch: Option<usize>,
    lr: Option<f32>,
    wd: Option<f32>,
    seed: Option<u64>,
    seq_len: Option<usize>,
    model_cfg: Option<String>,
    head: Option<String>,
    balance: Option<bool>,
}

/// Fully resolved run settings, recorded in the manifest.
#[derive(Debug, Clone, Serialize)]
struct Settings {
    task: Task,
    target: Option<String>,
    model_cfg: String,
    model: GptConfig,
    epochs: usize,
    batch: usize,
    seq_len: usize,
    seed: u64,
    balance: bool,
    /// Explicit optimizer overrides; unset fields use the policy defaults.
    lr: Option<f32>,
    wd: Option<f32>,
}

impl Settings {
    fn optimizer(&self, policy: &FreezePolicy) -> OptimizerHp {
        let mut hp = OptimizerHp::for_policy(policy);
        if let Some(lr) = self.lr {
            hp.lr = lr;
        }
        if let Some(wd) = self.wd {
            hp.weight_decay = wd;
        }
        hp
    }

    fn train_config(&self, policy: &FreezePolicy) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            seq_len: self.seq_len,
            optimizer: self.optimizer(policy),
            policy: policy.clone(),
            seed: self.seed,
            eval_every: 1,
            balance: self.balance,
            draws_per_epoch: None,
        }
    }
}

fn read_settings_file(path: Option<&Path>, log: &mut RunLog) -> anyhow::Result<SettingsFile> {
    let Some(p) = path else { return Ok(SettingsFile::default()) };
    log.input(p);
    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing settings file {}", p.display()))
}

/// Flags, then the settings file, then defaults.
fn resolve(run: &RunOptions, file: &SettingsFile) -> anyhow::Result<Settings> {
    let task = Task::parse(run.task.as_deref().or(file.task.as_deref()).unwrap_or("binary"))?;
    let model_cfg = run.model_cfg.clone().or_else(|| file.model_cfg.clone()).unwrap_or_else(|| "gpt2-small".into());
    let head = match run.head.as_deref().or(file.head.as_deref()) {
        Some(h) => HeadKind::parse(h)?,
        None => task.head(),
    };
    if !task.accepts_head(head) {
        bail!("head {} cannot be trained on task {}", head.describe(), task.name());
    }
    let model = GptConfig::resolve(&model_cfg)?.with_head(head);
    let seq_len = run.seq_len.or(file.seq_len).unwrap_or(model.n_ctx.min(1024));
    if seq_len == 0 || seq_len > model.n_ctx {
        bail!("sequence length {seq_len} must be in 1..={} for this model", model.n_ctx);
    }
    let batch = run.batch.or(file.batch).unwrap_or(8);
    if batch == 0 {
        bail!("batch size must be at least 1");
    }
    Ok(Settings {
        task,
        target: run.target.clone().or_else(|| file.target.clone()),
        model_cfg,
        model,
        epochs: run.epochs.or(file.epochs).unwrap_or(10),
        batch,
        seq_len,
        seed: run.seed.or(file.seed).unwrap_or(0),
        balance: !run.no_balance && file.balance.unwrap_or(true),
        lr: run.lr.or(file.lr),
        wd: run.wd.or(file.wd),
    })
}

struct Prepared {
    settings: Settings,
    tokenizer: Tokenizer,
    data: SplitData,
}

fn load_split(dir: &Path, raw: &[RawExample], log: &mut RunLog) -> anyhow::Result<Split> {
    let index: HashMap<&str, usize> = raw.iter().enumerate().map(|(i, r)| (r.note_id.as_str(), i)).collect();
    let mut part = |name: &str| -> anyhow::Result<Vec<usize>> {
        let path = dir.join(format!("{name}_ids.txt"));
        log.input(&path);
        read_id_manifest(&path)?
            .iter()
            .map(|id| index.get(id.as_str()).copied().with_context(|| format!("{}: note {id} is not in the data", path.display())))
            .collect()
    };
    Ok(Split { train: part("train")?, val: part("val")?, test: part("test")? })
}

fn prepare(run: &RunOptions, file: &SettingsFile, log: &mut RunLog) -> anyhow::Result<Prepared> {
    let settings = resolve(run, file)?;
    log.input(&run.data);
    let raw = read_labeled(&run.data, settings.task, settings.target.as_deref())?;
    let split = match &run.split_dir {
        Some(dir) => load_split(dir, &raw, log)?,
        None => random_split(raw.len(), settings.seed)?,
    };
    if split.train.is_empty() {
        bail!("training split is empty");
    }
    let tokenizer = match &run.tokenizer {
        Some(p) => {
            log.input(p);
            Tokenizer::load(p)?
        }
        None => {
            let texts: Vec<&str> = split.train.iter().map(|&i| raw[i].text.as_str()).collect();
            Tokenizer::train(&texts, settings.model.n_vocab)?
        }
    };
    if tokenizer.vocab_size() > settings.model.n_vocab {
        bail!("tokenizer has {} entries but the model vocabulary is {}", tokenizer.vocab_size(), settings.model.n_vocab);
    }
    let examples = tokenize(&raw, &tokenizer)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| examples[i].clone()).collect::<Vec<Example>>();
    let data = SplitData { train: pick(&split.train), val: pick(&split.val), test: pick(&split.test), pad_id: tokenizer.pad_id() };
    log.seeds.push(settings.seed);
    Ok(Prepared { settings, tokenizer, data })
}

fn initial_params(cfg: &GptConfig, seed: u64, checkpoint: Option<&Path>, log: &mut RunLog) -> anyhow::Result<ModelParams> {
    match checkpoint {
        Some(p) => {
            log.input(p);
            Ok(load_checkpoint(p, cfg)?)
        }
        None => Ok(ModelParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(seed))?),
    }
}

fn sidecar(checkpoint: &Path, suffix: &str) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    checkpoint.with_file_name(name)
}

/// Metadata stored next to a checkpoint so `eval` can rebuild the model.
#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    model: GptConfig,
    task: Task,
    target: Option<String>,
    seq_len: usize,
}

fn print_record(prefix: &str, r: &EpochRecord) {
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    eprintln!(
        "{prefix}epoch {:>3}  train loss {:.4} acc {:.4}  val loss {} acc {}  {:.1}s",
        r.epoch,
        r.train_loss,
        r.train_acc,
        opt(r.val_loss),
        opt(r.val_acc),
        r.seconds
    );
}

fn metrics_csv(rows: &[(&str, &Evaluation)]) -> String {
    let mut s = String::from("split,n,loss,accuracy,f1,auroc\n");
    for (name, e) in rows {
        let m = &e.metrics;
        s.push_str(&format!("{name},{},{},{},{},{}\n", m.n, m.loss, m.accuracy, m.f1, m.auroc.map_or(String::new(), |a| a.to_string())));
    }
    s
}

pub fn train(a: &TrainArgs, log: &mut RunLog) -> anyhow::Result<()> {
    log.manifest_beside(&a.checkpoint_out);
    let file = read_settings_file(a.run.config.as_deref(), log)?;
    let policy = FreezePolicy::parse(a.policy.as_deref().or(file.policy.as_deref()).unwrap_or("selective"))?;
    let prep = prepare(&a.run, &file, log)?;
    let cfg = prep.settings.train_config(&policy);
    log.config = json!({ "settings": prep.settings, "train": cfg });
    let mut params = initial_params(&prep.settings.model, prep.settings.seed, a.checkpoint_in.as_deref(), log)?;
    policy.resolve(params.config())?;

    let outcome = train_with(&mut params, &prep.data.train, &prep.data.val, prep.data.pad_id, &cfg, &mut |r| print_record("", r))?;
    if !outcome.frozen_unchanged {
        bail!("a frozen tensor changed during training");
    }

    ensure_parent(&a.checkpoint_out)?;
    save_checkpoint(&params, &a.checkpoint_out)?;
    log.output(&a.checkpoint_out);
    let meta = CheckpointMeta {
        model: params.config().clone(),
        task: prep.settings.task,
        target: prep.settings.target.clone(),
        seq_len: prep.settings.seq_len,
    };
    for (suffix, body) in [(".config.json", serde_json::to_string_pretty(&meta)? + "\n"), (".tokenizer.json", prep.tokenizer.to_json())] {
        let p = sidecar(&a.checkpoint_out, suffix);
        write_file(&p, body)?;
        log.output(&p);
    }
    let curves = a.curves_out.clone().unwrap_or_else(|| sidecar(&a.checkpoint_out, ".curves.csv"));
    write_file(&curves, learning_curves_csv(&outcome.records))?;
    log.output(&curves);

    if !prep.data.test.is_empty() {
        let batches = eval_batches(&prep.data.test, &params, cfg.seq_len, cfg.batch_size, prep.data.pad_id)?;
        let e = evaluate(&params, &batches)?;
        let m = &e.metrics;
        println!(
            "test: n {}  accuracy {:.4}  f1 {:.4}  auroc {}",
            m.n,
            m.accuracy,
            m.f1,
            m.auroc.map_or("undefined".into(), |x| format!("{x:.4}"))
        );
    }
    println!("frozen tensors unchanged; {} optimizer steps; checkpoint -> {}", outcome.steps, a.checkpoint_out.display());
    Ok(())
}

pub fn eval(a: &EvalArgs, log: &mut RunLog) -> anyhow::Result<()> {
    log.manifest_in(&a.out);
    let meta_path = sidecar(&a.checkpoint, ".config.json");
    let tok_path = sidecar(&a.checkpoint, ".tokenizer.json");
    for p in [&a.checkpoint, &meta_path, &tok_path, &a.data] {
        log.input(p);
    }
    let meta: CheckpointMeta = serde_json::from_str(
        &std::fs::read_to_string(&meta_path).with_context(|| format!("reading {}", meta_path.display()))?,
    )
    .with_context(|| format!("parsing {}", meta_path.display()))?;
    if !meta.task.accepts_head(meta.model.head) {
        bail!("checkpoint head {} does not fit task {}", meta.model.head.describe(), meta.task.name());
    }
    log.config = json!({ "model": meta.model, "task": meta.task, "target": meta.target, "seq_len": meta.seq_len, "batch": a.batch });
    let params = load_checkpoint(&a.checkpoint, &meta.model)?;
    let tokenizer = Tokenizer::load(&tok_path)?;
    let mut raw = read_labeled(&a.data, meta.task, meta.target.as_deref())?;
    if let Some(ids) = &a.ids {
        log.input(ids);
        let keep: std::collections::HashSet<String> = read_id_manifest(ids)?.into_iter().collect();
        raw.retain(|r| keep.contains(&r.note_id));
    }
    let examples = tokenize(&raw, &tokenizer)?;
    let batches = eval_batches(&examples, &params, meta.seq_len, a.batch, tokenizer.pad_id())?;
    let e = evaluate(&params, &batches)?;
    let outputs = [
        ("metrics.csv", metrics_csv(&[("eval", &e)])),
        ("confusion.csv", e.confusion.to_csv()),
        ("roc.csv", roc_csv(&e.roc)),
    ];
    for (name, body) in outputs {
        let p = a.out.join(name);
        write_file(&p, body)?;
        log.output(&p);
    }
    print!("{}", metrics_csv(&[("eval", &e)]));
    Ok(())
}

pub fn compare(a: &CompareArgs, log: &mut RunLog) -> anyhow::Result<()> {
    log.manifest_in(&a.out);
    let file = read_settings_file(a.run.config.as_deref(), log)?;
    let prep = prepare(&a.run, &file, log)?;
    let policies = split_list(&a.strategies).map(FreezePolicy::parse).collect::<Result<Vec<_>, _>>()?;
    if policies.is_empty() {
        bail!("no strategies given");
    }
    let strategies: Vec<Strategy> =
        policies.iter().map(|p| Strategy { policy: p.clone(), optimizer: prep.settings.optimizer(p) }).collect();
    let base = prep.settings.train_config(&FreezePolicy::Full);
    log.config = json!({
        "settings": prep.settings,
        "strategies": strategies.iter().map(|s| json!({ "policy": s.policy, "optimizer": s.optimizer })).collect::<Vec<_>>(),
    });
    let init = initial_params(&prep.settings.model, prep.settings.seed, None, log)?;
    let report = compare_strategies_with(&init, &prep.data, &base, &strategies, &mut |p, r| {
        print_record(&format!("{:<10} ", p.name()), r)
    })?;
    let mut files = vec![
        ("table1.csv".to_string(), report.table_csv()),
        ("timing.csv".to_string(), report.timing_csv()),
        ("tokenizer.json".to_string(), prep.tokenizer.to_json()),
    ];
    for r in &report.results {
        if !r.frozen_unchanged {
            bail!("{}: a frozen tensor changed during training", r.policy.name());
        }
        let name = r.policy.name().replace([':', ',', '*'], "_");
        files.push((format!("curves_{name}.csv"), learning_curves_csv(&r.records)));
        files.push((format!("roc_{name}.csv"), roc_csv(&r.test.roc)));
        files.push((format!("confusion_{name}.csv"), r.test.confusion.to_csv()));
    }
    for (name, body) in files {
        let p = a.out.join(name);
        write_file(&p, body)?;
        log.output(&p);
    }
    print!("{}", report.table_csv());
    Ok(())
}
