//! Labeled datasets: loading, label extraction and split manifests.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::data::batching::Split;
use crate::data::bpe::Tokenizer;
use crate::error::{Error, Result};
use crate::labeler::{read_rows, Label3};
use crate::model::HeadKind;

/// Prediction task and the head that serves it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binary,
    /// One condition's 4-state label encoded Neg 0, Pos 1, Unc 2, Null 3.
    Multiclass4,
    /// All condition binaries at once.
    Multilabel13,
}

pub const MULTILABEL_WIDTH: usize = 13;

impl Task {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Task::Binary),
            "multiclass4" => Ok(Task::Multiclass4),
            "multilabel13" => Ok(Task::Multilabel13),
            _ => Err(Error::config(format!("unknown task {s:?} (expected binary, multiclass4 or multilabel13)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Binary => "binary",
            Task::Multiclass4 => "multiclass4",
            Task::Multilabel13 => "multilabel13",
        }
    }

    /// Binary tasks use a two-way softmax so that the head matches the
    /// `C = 2` parameter count.
    pub fn head(self) -> HeadKind {
        match self {
            Task::Binary => HeadKind::MultiClassSoftmax { classes: 2 },
            Task::Multiclass4 => HeadKind::MultiClassSoftmax { classes: 4 },
            Task::Multilabel13 => HeadKind::MultiLabelSigmoid { labels: MULTILABEL_WIDTH },
        }
    }

    /// Whether `head` can be trained on this task's labels.
    pub fn accepts_head(self, head: HeadKind) -> bool {
        match (self, head) {
            (Task::Binary, HeadKind::BinarySigmoid) => true,
            (Task::Binary, HeadKind::MultiClassSoftmax { classes }) => classes == 2,
            (Task::Multiclass4, HeadKind::MultiClassSoftmax { classes }) => classes == 4,
            (Task::Multilabel13, HeadKind::MultiLabelSigmoid { labels }) => labels == MULTILABEL_WIDTH,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Class(usize),
    Multi(Vec<u8>),
}

impl Label {
    pub fn class(&self) -> Option<usize> {
        match self {
            Label::Class(c) => Some(*c),
            Label::Multi(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawExample {
    pub note_id: String,
    pub text: String,
    pub label: Label,
}

/// A tokenized example; `ids` is not yet padded or truncated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub note_id: String,
    pub ids: Vec<u32>,
    pub label: Label,
}

fn as_int(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n.as_i64().or_else(|| n.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64)),
        Value::Bool(b) => Some(i64::from(*b)),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// CSV cells arrive as strings; empty means null.
fn as_label3(v: &Value) -> Result<Label3> {
    match v {
        Value::String(s) if s.trim().is_empty() => Ok(Label3::Null),
        Value::String(s) => {
            Label3::from_json(&Value::from(s.trim().parse::<i64>().map_err(|_| Error::contract(format!("{s:?} is not a label")))?))
        }
        v => Label3::from_json(v),
    }
}

fn binary(v: &Value, what: &str) -> Result<u8> {
    match as_int(v) {
        Some(x @ (0 | 1)) => Ok(x as u8),
        _ => Err(Error::contract(format!("{what}: {v} is not a 0/1 label"))),
    }
}

/// Extracts the task label from one row.
///
/// Without `target`, the row's `label` (binary or class index) or `labels`
/// (multilabel list) field is used. With `target`, labeler output columns
/// are read: a `y_*_3` column for multiclass4, any 0/1 column for binary,
/// and for multilabel13 a scheme suffix (`bin_posonly`, `bin_pos_or_unc`)
/// selecting every `y_*_<scheme>` column in row order.
pub fn row_label(row: &Map<String, Value>, task: Task, target: Option<&str>) -> Result<Label> {
    let get = |k: &str| row.get(k).ok_or_else(|| Error::contract(format!("missing column {k}")));
    match (task, target) {
        (Task::Multilabel13, None) => {
            let v = get("labels")?.as_array().ok_or_else(|| Error::contract("labels must be a list"))?;
            let bits = v.iter().map(|x| binary(x, "labels")).collect::<Result<Vec<_>>>()?;
            if bits.len() != MULTILABEL_WIDTH {
                return Err(Error::contract(format!("expected {MULTILABEL_WIDTH} labels, got {}", bits.len())));
            }
            Ok(Label::Multi(bits))
        }
        (Task::Multilabel13, Some(scheme)) => {
            let suffix = format!("_{}", scheme.trim_start_matches('_'));
            let bits = row
                .iter()
                .filter(|(k, _)| k.starts_with("y_") && k.ends_with(&suffix))
                .map(|(k, v)| binary(v, k))
                .collect::<Result<Vec<_>>>()?;
            if bits.len() != MULTILABEL_WIDTH {
                return Err(Error::contract(format!(
                    "scheme {scheme:?} selects {} columns, expected {MULTILABEL_WIDTH}",
                    bits.len()
                )));
            }
            Ok(Label::Multi(bits))
        }
        (Task::Binary, t) => {
            let key = t.unwrap_or("label");
            Ok(Label::Class(binary(get(key)?, key)? as usize))
        }
        (Task::Multiclass4, Some(col)) if col.ends_with("_3") => Ok(Label::Class(as_label3(get(col)?)?.encode() as usize)),
        (Task::Multiclass4, t) => {
            let key = t.unwrap_or("label");
            match as_int(get(key)?) {
                Some(c @ 0..=3) => Ok(Label::Class(c as usize)),
                _ => Err(Error::contract(format!("{key}: expected a class index in 0..=3"))),
            }
        }
    }
}

/// Reads a labeled JSONL or CSV file. Row errors name the record.
pub fn read_labeled(path: &Path, task: Task, target: Option<&str>) -> Result<Vec<RawExample>> {
    read_rows(path)?
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let note_id = row.get("note_id").map(|v| v.as_str().map_or_else(|| v.to_string(), String::from));
            let name = note_id.clone().unwrap_or_else(|| format!("record {}", i + 1));
            let ctx = |e: Error| Error::contract(format!("{}: {name}: {e}", path.display()));
            let text = row.get("text").and_then(Value::as_str).ok_or_else(|| ctx(Error::contract("no text field")))?;
            let label = row_label(&row, task, target).map_err(ctx)?;
            Ok(RawExample { note_id: note_id.unwrap_or_else(|| i.to_string()), text: text.to_string(), label })
        })
        .collect()
}

pub fn tokenize(raw: &[RawExample], tokenizer: &Tokenizer) -> Result<Vec<Example>> {
    raw.iter()
        .map(|r| {
            let ids = tokenizer.encode(&r.text)?;
            if ids.is_empty() {
                return Err(Error::contract(format!("{}: text tokenizes to nothing", r.note_id)));
            }
            Ok(Example { note_id: r.note_id.clone(), ids, label: r.label.clone() })
        })
        .collect()
}

/// Writes `train_ids.txt`, `val_ids.txt`, `test_ids.txt` (one note id per
/// line) and `split_summary.json` to `dir`.
pub fn write_split_manifests(dir: &Path, note_ids: &[String], split: &Split, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, idx) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        let path = dir.join(format!("{name}_ids.txt"));
        let mut body = String::new();
        for &i in idx.iter() {
            body.push_str(note_ids.get(i).ok_or(Error::Index { index: i, extent: note_ids.len() })?);
            body.push('\n');
        }
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    let summary = serde_json::json!({
        "n": note_ids.len(),
        "seed": seed,
        "train": split.train.len(),
        "val": split.val.len(),
        "test": split.test.len(),
    });
    let path = dir.join("split_summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary).expect("json") + "\n").map_err(|e| Error::io(&path, e))
}

/// Reads one id manifest back.
pub fn read_id_manifest(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().filter(|l| !l.is_empty()).map(String::from).collect())
}
