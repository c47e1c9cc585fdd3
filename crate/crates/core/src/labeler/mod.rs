//! Rule-based report labeling with an explicit uncertain state.
//!
//! Each condition is found by keyword, and every mention is classified by
//! the negation and uncertainty cues in its context window (the enclosing
//! sentence, clamped to `±w` characters). Mentions are aggregated per report
//! with precedence positive > uncertain > negated.

mod config;
mod io;
mod label;
mod prevalence;
mod text;

pub use config::{ConditionRules, CueScope, Keyword, LabelerConfig};
pub use io::{read_csv_rows, read_jsonl, read_labels, read_reports, read_rows, write_labels, write_labels_as, LabelFormat, Report};
pub use label::{column_names, label_condition, label_report, EncodedLabels, Label3, ReportIds, ReportLabels};
pub use prevalence::{display_name, prevalence, PrevalenceRow, PrevalenceTable};
pub use text::{
    context_window, detect_cues, find_mentions, find_phrase, has_cue, matches_any_pattern, normalize_bytes, normalize_text,
    CueHits, Mention, Span,
};
