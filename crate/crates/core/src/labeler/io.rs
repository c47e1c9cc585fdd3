use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::labeler::label::value_to_id;
use crate::labeler::{column_names, LabelerConfig, ReportIds, ReportLabels};

/// One input report.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Report {
    pub ids: ReportIds,
    pub text: String,
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads JSON Lines objects from `path`, skipping blank lines.
pub fn read_jsonl(path: &Path) -> Result<Vec<Map<String, Value>>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Map<String, Value> =
            serde_json::from_str(&line).map_err(|e| Error::json(format!("{}:{}", path.display(), n + 1), e))?;
        out.push(v);
    }
    Ok(out)
}

/// Reads a CSV file with a header row into JSON-like maps of strings.
pub fn read_csv_rows(path: &Path) -> Result<Vec<Map<String, Value>>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), Value::from(v))).collect());
    }
    Ok(out)
}

/// JSONL or (by `.csv` extension) CSV rows.
pub fn read_rows(path: &Path) -> Result<Vec<Map<String, Value>>> {
    if is_csv(path) {
        read_csv_rows(path)
    } else {
        read_jsonl(path)
    }
}

/// Reports with `note_id`, `subject_id`, `hadm_id` and `text` columns.
/// Missing ids become empty strings; a missing `text` is an error.
pub fn read_reports(path: &Path) -> Result<Vec<Report>> {
    read_rows(path)?
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let id = |k: &str| row.get(k).map(value_to_id).unwrap_or_default();
            let text = row
                .get("text")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::config(format!("{}: record {} has no text field", path.display(), i + 1)))?;
            Ok(Report {
                ids: ReportIds { note_id: id("note_id"), subject_id: id("subject_id"), hadm_id: id("hadm_id") },
                text: text.to_string(),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelFormat {
    Jsonl,
    Csv,
}

impl LabelFormat {
    /// CSV for a `.csv` extension, JSONL otherwise.
    pub fn from_path(path: &Path) -> Self {
        if is_csv(path) {
            LabelFormat::Csv
        } else {
            LabelFormat::Jsonl
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(LabelFormat::Jsonl),
            "csv" => Ok(LabelFormat::Csv),
            _ => Err(Error::config(format!("unknown format {s:?} (expected jsonl or csv)"))),
        }
    }
}

/// Writes labeled rows as JSONL or (by `.csv` extension) CSV. CSV cells use
/// empty strings for null labels. `texts`, when given, adds a `text` column.
pub fn write_labels(path: &Path, labels: &[ReportLabels], texts: Option<&[String]>, cfg: &LabelerConfig) -> Result<()> {
    write_labels_as(path, LabelFormat::from_path(path), labels, texts, cfg)
}

pub fn write_labels_as(
    path: &Path,
    format: LabelFormat,
    labels: &[ReportLabels],
    texts: Option<&[String]>,
    cfg: &LabelerConfig,
) -> Result<()> {
    let rows = labels.iter().enumerate().map(|(i, l)| l.to_row(texts.map(|t| t[i].as_str())));
    if format == LabelFormat::Csv {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(column_names(cfg, texts.is_some()))?;
        for row in rows {
            w.write_record(row.values().map(|v| match v {
                Value::Null => String::new(),
                Value::String(s) => s.clone(),
                other => other.to_string(),
            }))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    } else {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        for row in rows {
            serde_json::to_writer(&mut f, &row).map_err(|e| Error::json("label row", e))?;
            f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        f.flush().map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Reads labeler output (JSONL or CSV) back into labels.
pub fn read_labels(path: &Path, cfg: &LabelerConfig) -> Result<Vec<ReportLabels>> {
    read_rows(path)?
        .into_iter()
        .map(|mut row| {
            // CSV cells arrive as strings; convert label cells back to JSON values.
            for v in row.values_mut() {
                if let Value::String(s) = v {
                    if s.is_empty() {
                        *v = Value::Null;
                    } else if let Ok(n) = s.parse::<i64>() {
                        *v = Value::from(n);
                    }
                }
            }
            ReportLabels::from_row(&row, cfg)
        })
        .collect()
}
