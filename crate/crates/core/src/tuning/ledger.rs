use std::fmt::Write as _;

use serde::Serialize;

use crate::error::Result;
use crate::model::{Component, GptConfig, ParamSpec};
use crate::tuning::FreezePolicy;

/// Counting convention for the parameter ledger.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// Weight matrices only: attention and feed-forward biases and the
    /// position table are not counted, so embeddings are the token table
    /// alone (`V·d`). Parsed from `compact` or `paper`.
    Compact,
    /// Every tensor, biases included.
    Full,
}

impl Convention {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "compact" | "paper" => Some(Convention::Compact),
            "full" => Some(Convention::Full),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Convention::Compact => "compact",
            Convention::Full => "full",
        }
    }

    pub fn counts(self, spec: &ParamSpec) -> bool {
        self == Convention::Full || !(spec.is_projection_bias() || spec.component == Component::PositionEmbedding)
    }
}

/// Parameter counts for one component group.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LedgerRow {
    /// `embeddings`, `blocks.{i}.attention`, `blocks.{i}.ffn`, `blocks.{i}.ln`,
    /// `final_ln` or `head`.
    pub component: String,
    pub params: u64,
    pub trainable: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamLedger {
    pub convention: Convention,
    pub policy: String,
    pub rows: Vec<LedgerRow>,
    pub total: u64,
    pub trainable: u64,
    pub frozen: u64,
}

impl ParamLedger {
    pub fn trainable_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.trainable as f64 / self.total as f64
        }
    }

    pub fn component(&self, name: &str) -> Option<&LedgerRow> {
        self.rows.iter().find(|r| r.component == name)
    }

    /// Sum of the attention, feed-forward and layer-norm rows of block `b`.
    pub fn block_total(&self, b: usize) -> u64 {
        let prefix = format!("blocks.{b}.");
        self.rows.iter().filter(|r| r.component.starts_with(&prefix)).map(|r| r.params).sum()
    }
}

fn group(spec: &ParamSpec) -> String {
    match (spec.component, spec.block) {
        (Component::TokenEmbedding | Component::PositionEmbedding, _) => "embeddings".into(),
        (Component::Attention, Some(b)) => format!("blocks.{b}.attention"),
        (Component::FeedForward, Some(b)) => format!("blocks.{b}.ffn"),
        (Component::BlockNorm, Some(b)) => format!("blocks.{b}.ln"),
        (Component::FinalNorm, _) => "final_ln".into(),
        (Component::Head, _) => "head".into(),
        (c, None) => unreachable!("block component {c:?} without a block index"),
    }
}

/// Counts every tensor induced by `cfg` exactly once, grouped by component.
pub fn count_params(cfg: &GptConfig, policy: &FreezePolicy, convention: Convention) -> Result<ParamLedger> {
    cfg.validate()?;
    let flags = policy.resolve(cfg)?;
    let mut rows: Vec<LedgerRow> = Vec::new();
    for (spec, trainable) in cfg.param_specs().iter().zip(flags) {
        let n = if convention.counts(spec) { spec.numel() as u64 } else { 0 };
        let name = group(spec);
        let row = match rows.iter_mut().find(|r| r.component == name) {
            Some(r) => r,
            None => {
                rows.push(LedgerRow { component: name, params: 0, trainable: 0 });
                rows.last_mut().expect("just pushed")
            }
        };
        row.params += n;
        if trainable {
            row.trainable += n;
        }
    }
    let total = rows.iter().map(|r| r.params).sum();
    let trainable = rows.iter().map(|r| r.trainable).sum();
    Ok(ParamLedger {
        convention,
        policy: policy.name(),
        rows,
        total,
        trainable,
        frozen: total - trainable,
    })
}

/// One line of the two-convention summary table.
#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub values: Vec<String>,
}

/// Summary rows (per-block figures for block 0, which all blocks share)
/// with one value column per ledger.
pub fn ledger_table(ledgers: &[ParamLedger]) -> Vec<TableRow> {
    let count = |f: &dyn Fn(&ParamLedger) -> u64| ledgers.iter().map(|l| group_digits(f(l))).collect::<Vec<_>>();
    let comp = |name: &'static str| move |l: &ParamLedger| l.component(name).map_or(0, |r| r.params);
    let mut rows = vec![
        TableRow { label: "embeddings".into(), values: count(&comp("embeddings")) },
        TableRow { label: "attention (per block)".into(), values: count(&comp("blocks.0.attention")) },
        TableRow { label: "ffn (per block)".into(), values: count(&comp("blocks.0.ffn")) },
        TableRow { label: "layer norms (per block)".into(), values: count(&comp("blocks.0.ln")) },
        TableRow { label: "block total (per block)".into(), values: count(&|l| l.block_total(0)) },
        TableRow {
            label: "all blocks".into(),
            values: count(&|l| l.rows.iter().filter(|r| r.component.starts_with("blocks.")).map(|r| r.params).sum()),
        },
        TableRow { label: "final layer norm".into(), values: count(&comp("final_ln")) },
        TableRow { label: "head".into(), values: count(&comp("head")) },
        TableRow { label: "total".into(), values: count(&|l| l.total) },
        TableRow { label: "trainable".into(), values: count(&|l| l.trainable) },
        TableRow { label: "frozen".into(), values: count(&|l| l.frozen) },
    ];
    rows.push(TableRow {
        label: "trainable %".into(),
        values: ledgers.iter().map(|l| format!("{:.2}", 100.0 * l.trainable_fraction())).collect(),
    });
    rows
}

pub fn table_csv(headers: &[String], rows: &[TableRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["component".to_string()];
    head.extend(headers.iter().cloned());
    w.write_record(&head).expect("in-memory write");
    for r in rows {
        let mut rec = vec![r.label.clone()];
        rec.extend(r.values.iter().map(|v| v.replace(',', "")));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn table_text(headers: &[String], rows: &[TableRow]) -> String {
    let label_w = rows.iter().map(|r| r.label.len()).chain([9]).max().unwrap_or(9);
    let col_w: Vec<usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| rows.iter().map(|r| r.values[i].len()).chain([h.len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let _ = write!(out, "{:<label_w$}", "component");
    for (h, w) in headers.iter().zip(&col_w) {
        let _ = write!(out, "  {h:>w$}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{:<label_w$}", r.label);
        for (v, w) in r.values.iter().zip(&col_w) {
            let _ = write!(out, "  {v:>w$}");
        }
        out.push('\n');
    }
    out
}

/// `7080960` → `7,080,960`
pub fn group_digits(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}
