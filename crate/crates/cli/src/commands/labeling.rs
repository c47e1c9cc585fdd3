use std::io::{BufRead, BufReader, Write};

use anyhow::{bail, Context};
use serde_json::{json, Map, Value};

use seltune::data::{random_split, write_split_manifests, Tokenizer};
use seltune::labeler::{
    label_report, prevalence as prevalence_table, read_csv_rows, read_labels, read_reports, read_rows, write_labels_as,
    LabelFormat, LabelerConfig, ReportIds, ReportLabels,
};
use seltune::synth::{generate_reports, SynthConfig};

use super::write_file;
use crate::args::{LabelArgs, PrevalenceArgs, SplitArgs, SynthArgs, TrainTokenizerArgs};
use crate::manifest::RunLog;

fn labeler_config(path: Option<&std::path::Path>, log: &mut RunLog) -> anyhow::Result<LabelerConfig> {
    match path {
        Some(p) => {
            log.input(p);
            Ok(LabelerConfig::from_path(p)?)
        }
        None => Ok(LabelerConfig::default_rules()),
    }
}

fn id_string(v: Option<&Value>) -> String {
    match v {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => String::new(),
        Some(other) => other.to_string(),
    }
}

/// Rows of the input, each parsed independently so one bad JSON line does
/// not hide the rest.
fn input_rows(path: &std::path::Path) -> anyhow::Result<Vec<Result<Map<String, Value>, String>>> {
    if LabelFormat::from_path(path) == LabelFormat::Csv {
        return Ok(read_csv_rows(path)?.into_iter().map(Ok).collect());
    }
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", n + 1)));
    }
    Ok(rows)
}

pub fn label(a: &LabelArgs, log: &mut RunLog) -> anyhow::Result<()> {
    log.manifest_beside(&a.output);
    log.input(&a.input);
    let cfg = labeler_config(a.config.as_deref(), log)?;
    let format = match &a.format {
        Some(f) => LabelFormat::parse(f)?,
        None => LabelFormat::from_path(&a.output),
    };
    log.config = json!({
        "format": format!("{format:?}").to_lowercase(),
        "with_text": a.with_text,
        "strict": a.strict,
        "window_chars": cfg.window_chars,
        "conditions": cfg.condition_names().collect::<Vec<_>>(),
    });
    let mut labels = Vec::new();
    let mut texts = Vec::new();
    let mut failures = Vec::new();
    for (i, row) in input_rows(&a.input)?.into_iter().enumerate() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                failures.push(e);
                continue;
            }
        };
        let ids = ReportIds {
            note_id: id_string(row.get("note_id")),
            subject_id: id_string(row.get("subject_id")),
            hadm_id: id_string(row.get("hadm_id")),
        };
        match row.get("text").and_then(Value::as_str) {
            Some(text) => {
                labels.push(label_report(ids, text, &cfg));
                texts.push(text.to_string());
            }
            None => {
                let who = if ids.note_id.is_empty() { format!("record {}", i + 1) } else { format!("note_id {}", ids.note_id) };
                failures.push(format!("{who}: missing text field"));
            }
        }
    }
    for f in &failures {
        eprintln!("row error: {f}");
    }
    write_labels_as(&a.output, format, &labels, a.with_text.then_some(texts.as_slice()), &cfg)?;
    log.output(&a.output);
    println!("labeled {} reports ({} failed) -> {}", labels.len(), failures.len(), a.output.display());
    if a.strict && !failures.is_empty() {
        bail!("{} rows failed", failures.len());
    }
    Ok(())
}

pub fn prevalence(a: &PrevalenceArgs, log: &mut RunLog) -> anyhow::Result<()> {
    log.input(&a.input);
    if let Some(o) = &a.output {
        log.manifest_beside(o);
    }
    let cfg = labeler_config(a.config.as_deref(), log)?;
    let labels: Vec<ReportLabels> = read_labels(&a.input, &cfg)?;
    let table = prevalence_table(&labels)?;
    print!("{}", table.to_text());
    if let Some(o) = &a.output {
        write_file(o, table.to_csv())?;
        log.output(o);
    }
    Ok(())
}

pub fn split(a: &SplitArgs, log: &mut RunLog) -> anyhow::Result<()> {
    log.manifest_in(&a.out_dir);
    log.input(&a.input);
    log.seeds.push(a.seed);
    let ids: Vec<String> = read_rows(&a.input)?.iter().map(|r| id_string(r.get("note_id"))).collect();
    log.config = json!({ "seed": a.seed, "n": ids.len() });
    let s = random_split(ids.len(), a.seed)?;
    write_split_manifests(&a.out_dir, &ids, &s, a.seed)?;
    for f in ["train_ids.txt", "val_ids.txt", "test_ids.txt", "split_summary.json"] {
        log.output(&a.out_dir.join(f));
    }
    println!("train {} / val {} / test {}", s.train.len(), s.val.len(), s.test.len());
    Ok(())
}

pub fn train_tokenizer(a: &TrainTokenizerArgs, log: &mut RunLog) -> anyhow::Result<()> {
    log.manifest_beside(&a.output);
    log.input(&a.input);
    log.config = json!({ "vocab_size": a.vocab_size });
    let reports = read_reports(&a.input)?;
    let texts: Vec<&str> = reports.iter().map(|r| r.text.as_str()).collect();
    let tok = Tokenizer::train(&texts, a.vocab_size)?;
    write_file(&a.output, tok.to_json())?;
    log.output(&a.output);
    println!("vocabulary {} ({} merges) -> {}", tok.vocab_size(), tok.merges().len(), a.output.display());
    Ok(())
}

pub fn synth(a: &SynthArgs, log: &mut RunLog) -> anyhow::Result<()> {
    log.manifest_beside(&a.output);
    log.seeds.push(a.seed);
    let cfg = SynthConfig { reports: a.reports, seed: a.seed, ..SynthConfig::default() };
    log.config = serde_json::to_value(&cfg)?;
    let mut out = Vec::new();
    for r in generate_reports(&cfg) {
        let row = json!({
            "note_id": r.report.ids.note_id,
            "subject_id": r.report.ids.subject_id,
            "hadm_id": r.report.ids.hadm_id,
            "text": r.report.text,
        });
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    write_file(&a.output, out)?;
    log.output(&a.output);
    println!("wrote {} reports -> {}", a.reports, a.output.display());
    Ok(())
}
