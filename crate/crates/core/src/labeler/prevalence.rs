use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::labeler::ReportLabels;
use crate::tuning::group_digits;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrevalenceRow {
    pub label: String,
    pub posonly: u64,
    pub pos_or_unc: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrevalenceTable {
    pub n: u64,
    pub rows: Vec<PrevalenceRow>,
}

/// `pleural_effusion` → `Pleural effusion`
pub fn display_name(condition: &str) -> String {
    let spaced = condition.replace('_', " ");
    let mut chars = spaced.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

impl PrevalenceTable {
    pub fn percent(&self, count: u64) -> f64 {
        count as f64 / self.n as f64 * 100.0
    }

    /// `183,046 (26.88%)`
    pub fn cell(&self, count: u64) -> String {
        format!("{} ({:.2}%)", group_digits(count), self.percent(count))
    }

    pub fn row(&self, label: &str) -> Option<&PrevalenceRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["label", "posonly_n", "posonly_pct", "pos_or_unc_n", "pos_or_unc_pct"]).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                r.posonly.to_string(),
                format!("{:.2}", self.percent(r.posonly)),
                r.pos_or_unc.to_string(),
                format!("{:.2}", self.percent(r.pos_or_unc)),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn to_text(&self) -> String {
        let heads = ["Label", "Positive-only, n (%)", "Positive-or-uncertain, n (%)"];
        let cells: Vec<[String; 3]> = self
            .rows
            .iter()
            .map(|r| [r.label.clone(), self.cell(r.posonly), self.cell(r.pos_or_unc)])
            .collect();
        let width = |i: usize| cells.iter().map(|c| c[i].len()).chain([heads[i].len()]).max().unwrap_or(0);
        let (w0, w1, w2) = (width(0), width(1), width(2));
        let mut out = format!("{:<w0$}  {:>w1$}  {:>w2$}\n", heads[0], heads[1], heads[2]);
        for c in &cells {
            let _ = writeln!(out, "{:<w0$}  {:>w1$}  {:>w2$}", c[0], c[1], c[2]);
        }
        let _ = writeln!(out, "N = {}", group_digits(self.n));
        out
    }
}

/// Per-label counts under both binarization schemes, preceded by the
/// any-abnormality and strict no-finding rows.
pub fn prevalence(corpus: &[ReportLabels]) -> Result<PrevalenceTable> {
    let first = corpus.first().ok_or_else(|| Error::contract("prevalence of an empty corpus"))?;
    let sum = |f: &dyn Fn(&ReportLabels) -> u8| corpus.iter().map(|r| f(r) as u64).sum::<u64>();
    let strict = sum(&|r| r.no_finding_strict());
    let mut rows = vec![
        PrevalenceRow {
            label: "Any abnormality".into(),
            posonly: sum(&|r| r.any_disease_posonly()),
            pos_or_unc: sum(&|r| r.any_disease_pos_or_unc()),
        },
        PrevalenceRow { label: "No finding (strict)".into(), posonly: strict, pos_or_unc: strict },
    ];
    for (i, (name, _)) in first.conditions.iter().enumerate() {
        rows.push(PrevalenceRow {
            label: display_name(name),
            posonly: sum(&|r| r.conditions[i].1.bin_posonly()),
            pos_or_unc: sum(&|r| r.conditions[i].1.bin_pos_or_unc()),
        });
    }
    Ok(PrevalenceTable { n: corpus.len() as u64, rows })
}
