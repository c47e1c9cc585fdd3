use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::labeler::text::{context_window, detect_cues, find_mentions, matches_any_pattern, normalize_text};
use crate::labeler::{ConditionRules, LabelerConfig};

/// Report-level status of one condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label3 {
    Pos,
    Neg,
    Unc,
    /// Not mentioned.
    Null,
}

impl Label3 {
    pub const ALL: [Label3; 4] = [Label3::Pos, Label3::Neg, Label3::Unc, Label3::Null];

    /// Training encoding: Pos 1, Neg 0, Unc 2, Null 3.
    pub fn encode(self) -> u8 {
        match self {
            Label3::Neg => 0,
            Label3::Pos => 1,
            Label3::Unc => 2,
            Label3::Null => 3,
        }
    }

    pub fn decode(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Label3::Neg),
            1 => Ok(Label3::Pos),
            2 => Ok(Label3::Unc),
            3 => Ok(Label3::Null),
            _ => Err(Error::contract(format!("label code {code} outside 0..=3"))),
        }
    }

    /// Output column value: 1, 0, -1 or null.
    pub fn to_json(self) -> Value {
        match self {
            Label3::Pos => Value::from(1),
            Label3::Neg => Value::from(0),
            Label3::Unc => Value::from(-1),
            Label3::Null => Value::Null,
        }
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        match v {
            Value::Null => Ok(Label3::Null),
            v => match v.as_i64() {
                Some(1) => Ok(Label3::Pos),
                Some(0) => Ok(Label3::Neg),
                Some(-1) => Ok(Label3::Unc),
                _ => Err(Error::contract(format!("{v} is not a 3-class label (1, 0, -1, null)"))),
            },
        }
    }

    pub fn bin_posonly(self) -> u8 {
        u8::from(self == Label3::Pos)
    }

    pub fn bin_pos_or_unc(self) -> u8 {
        u8::from(matches!(self, Label3::Pos | Label3::Unc))
    }
}

/// Aggregates mention decisions: any plain mention gives Pos; otherwise any
/// uncertain, non-negated mention gives Unc; otherwise (all negated) Neg.
/// A mention that is both negated and uncertain counts as negated.
pub fn label_condition(text: &str, rules: &ConditionRules, cfg: &LabelerConfig) -> Label3 {
    let mentions = find_mentions(text, rules);
    if mentions.is_empty() {
        return Label3::Null;
    }
    let (mut pos, mut unc, mut neg_all) = (false, false, true);
    for m in &mentions {
        let window = context_window(text, &m.span, cfg.window_chars);
        let cues = detect_cues(text, window, &m.span, &cfg.negation_cues, &cfg.uncertainty_cues, cfg.cue_scope);
        if !cues.negated {
            neg_all = false;
            if cues.uncertain {
                unc = true;
            } else {
                pos = true;
            }
        }
    }
    if pos {
        Label3::Pos
    } else if unc {
        Label3::Unc
    } else if neg_all {
        Label3::Neg
    } else {
        unreachable!("every non-negated mention sets pos or unc")
    }
}

/// Identifiers carried through from the input, kept as opaque strings.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportIds {
    pub note_id: String,
    pub subject_id: String,
    pub hadm_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportLabels {
    pub ids: ReportIds,
    pub y_no_finding_phrase: u8,
    /// `(condition, label)` in configuration order.
    pub conditions: Vec<(String, Label3)>,
}

impl ReportLabels {
    pub fn label(&self, condition: &str) -> Option<Label3> {
        self.conditions.iter().find(|(c, _)| c == condition).map(|&(_, l)| l)
    }

    pub fn any_disease_posonly(&self) -> u8 {
        u8::from(self.conditions.iter().any(|(_, l)| l.bin_posonly() == 1))
    }

    pub fn any_disease_pos_or_unc(&self) -> u8 {
        u8::from(self.conditions.iter().any(|(_, l)| l.bin_pos_or_unc() == 1))
    }

    pub fn no_finding_strict(&self) -> u8 {
        u8::from(self.y_no_finding_phrase == 1 && self.any_disease_pos_or_unc() == 0)
    }

    /// Integer record: 3-class fields encoded {1, 0, 2, 3}, binaries as 0/1.
    pub fn encoded(&self) -> EncodedLabels {
        EncodedLabels {
            y_no_finding_phrase: self.y_no_finding_phrase,
            conditions: self.conditions.iter().map(|(c, l)| (c.clone(), l.encode())).collect(),
            label_any_disease_posonly: self.any_disease_posonly(),
            label_any_disease_pos_or_unc: self.any_disease_pos_or_unc(),
            label_no_finding_strict: self.no_finding_strict(),
        }
    }

    /// Output row with every column in order: ids, optional text, the
    /// no-finding phrase flag, 3-class columns, pos-only binaries,
    /// pos-or-uncertain binaries, then the three summary labels.
    pub fn to_row(&self, text: Option<&str>) -> Map<String, Value> {
        let mut row = Map::new();
        row.insert("note_id".into(), self.ids.note_id.clone().into());
        row.insert("subject_id".into(), self.ids.subject_id.clone().into());
        row.insert("hadm_id".into(), self.ids.hadm_id.clone().into());
        if let Some(t) = text {
            row.insert("text".into(), t.into());
        }
        row.insert("y_no_finding_phrase".into(), self.y_no_finding_phrase.into());
        for (c, l) in &self.conditions {
            row.insert(format!("y_{c}_3"), l.to_json());
        }
        for (c, l) in &self.conditions {
            row.insert(format!("y_{c}_bin_posonly"), l.bin_posonly().into());
        }
        for (c, l) in &self.conditions {
            row.insert(format!("y_{c}_bin_pos_or_unc"), l.bin_pos_or_unc().into());
        }
        row.insert("label_any_disease_posonly".into(), self.any_disease_posonly().into());
        row.insert("label_any_disease_pos_or_unc".into(), self.any_disease_pos_or_unc().into());
        row.insert("label_no_finding_strict".into(), self.no_finding_strict().into());
        row
    }

    /// Rebuilds labels from an output row written by [`ReportLabels::to_row`].
    pub fn from_row(row: &Map<String, Value>, cfg: &LabelerConfig) -> Result<Self> {
        let text = |k: &str| row.get(k).map(value_to_id).unwrap_or_default();
        let mut conditions = Vec::with_capacity(cfg.conditions.len());
        for name in cfg.condition_names() {
            let key = format!("y_{name}_3");
            let v = row.get(&key).ok_or_else(|| Error::contract(format!("missing column {key}")))?;
            conditions.push((name.to_string(), Label3::from_json(v)?));
        }
        let phrase = row.get("y_no_finding_phrase").and_then(Value::as_u64).unwrap_or(0);
        Ok(ReportLabels {
            ids: ReportIds { note_id: text("note_id"), subject_id: text("subject_id"), hadm_id: text("hadm_id") },
            y_no_finding_phrase: u8::from(phrase == 1),
            conditions,
        })
    }
}

/// Output column names in row order.
pub fn column_names(cfg: &LabelerConfig, with_text: bool) -> Vec<String> {
    let mut cols: Vec<String> = ["note_id", "subject_id", "hadm_id"].map(String::from).to_vec();
    if with_text {
        cols.push("text".into());
    }
    cols.push("y_no_finding_phrase".into());
    cols.extend(cfg.condition_names().map(|c| format!("y_{c}_3")));
    cols.extend(cfg.condition_names().map(|c| format!("y_{c}_bin_posonly")));
    cols.extend(cfg.condition_names().map(|c| format!("y_{c}_bin_pos_or_unc")));
    cols.extend(["label_any_disease_posonly", "label_any_disease_pos_or_unc", "label_no_finding_strict"].map(String::from));
    cols
}

pub(crate) fn value_to_id(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EncodedLabels {
    pub y_no_finding_phrase: u8,
    pub conditions: Vec<(String, u8)>,
    pub label_any_disease_posonly: u8,
    pub label_any_disease_pos_or_unc: u8,
    pub label_no_finding_strict: u8,
}

/// Labels one report. Pure in `(text, cfg)`.
pub fn label_report(ids: ReportIds, raw_text: &str, cfg: &LabelerConfig) -> ReportLabels {
    let text = normalize_text(raw_text);
    ReportLabels {
        ids,
        y_no_finding_phrase: u8::from(matches_any_pattern(&text, &cfg.no_finding_patterns)),
        conditions: cfg.conditions.iter().map(|r| (r.name.clone(), label_condition(&text, r, cfg))).collect(),
    }
}
