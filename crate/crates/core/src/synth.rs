//! Template-generated radiology reports for end-to-end runs.
//!
//! Each report states zero to three findings, each affirmed, negated or
//! hedged in its own sentence, mixed with condition-free filler sentences.
//! A cue never shares a sentence with another finding, so the rule-based
//! labeler recovers the intended state of every finding.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::labeler::{Label3, Report, ReportIds};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub reports: usize,
    pub seed: u64,
    pub max_findings: usize,
    pub max_fillers: usize,
    /// Relative weights of affirmed, negated and uncertain findings.
    pub state_weights: [f64; 3],
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { reports: 2000, seed: 0, max_findings: 3, max_fillers: 1, state_weights: [0.35, 0.4, 0.25] }
    }
}

/// `(condition, phrases)`; every phrase is a labeler keyword for that condition.
const FINDINGS: &[(&str, &[&str])] = &[
    ("enlarged_cardiomediastinum", &["widened mediastinum", "mediastinal widening"]),
    ("cardiomegaly", &["cardiomegaly", "cardiac enlargement"]),
    ("lung_opacity", &["opacity", "airspace opacity"]),
    ("lung_lesion", &["nodule", "mass"]),
    ("edema", &["edema", "pulmonary edema"]),
    ("consolidation", &["consolidation"]),
    ("pneumonia", &["pneumonia"]),
    ("atelectasis", &["atelectasis"]),
    ("pneumothorax", &["pneumothorax"]),
    ("pleural_effusion", &["pleural effusion", "effusion"]),
    ("pleural_other", &["pleural thickening"]),
    ("fracture", &["rib fracture", "fracture"]),
    ("support_devices", &["chest tube", "central line"]),
];

const AFFIRMED: &[&str] = &[
    "{} is present.",
    "there is a small {}.",
    "{side} {} is seen.",
    "findings consistent with {}.",
    "interval increase in {}.",
];

const NEGATED: &[&str] = &["no {}.", "there is no {}.", "no evidence of {}.", "{} is not seen.", "negative for {}."];

const UNCERTAIN: &[&str] =
    &["possible {}.", "{} cannot be excluded.", "findings may represent {}.", "questionable {}.", "likely {}."];

const FILLERS: &[&str] = &[
    "the heart size is normal.",
    "the lungs are clear.",
    "comparison is made to the prior study.",
    "the osseous structures are intact.",
    "pa and lateral views of the chest.",
];

const SIDES: &[&str] = &["left", "right", "bilateral"];

/// A generated report with the state intended for each stated finding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthReport {
    pub report: Report,
    pub findings: Vec<(&'static str, Label3)>,
}

fn sentence<R: Rng + ?Sized>(state: Label3, phrase: &str, rng: &mut R) -> String {
    let templates = match state {
        Label3::Pos => AFFIRMED,
        Label3::Neg => NEGATED,
        _ => UNCERTAIN,
    };
    let t = templates.choose(rng).expect("templates");
    let side = SIDES.choose(rng).expect("sides");
    t.replace("{side}", side).replace("{}", phrase)
}

pub fn generate_reports(cfg: &SynthConfig) -> Vec<SynthReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let states = [Label3::Pos, Label3::Neg, Label3::Unc];
    let total: f64 = cfg.state_weights.iter().sum();
    (0..cfg.reports)
        .map(|i| {
            let k = rng.random_range(0..=cfg.max_findings);
            let mut conditions: Vec<&(&str, &[&str])> = FINDINGS.choose_multiple(&mut rng, k).collect();
            conditions.sort_by_key(|c| c.0);
            let mut sentences = Vec::new();
            let mut findings = Vec::new();
            for (name, phrases) in conditions {
                let mut u = rng.random::<f64>() * total;
                let mut state = Label3::Unc;
                for (s, w) in states.iter().zip(cfg.state_weights) {
                    if u < w {
                        state = *s;
                        break;
                    }
                    u -= w;
                }
                let phrase = phrases.choose(&mut rng).expect("phrases");
                sentences.push(sentence(state, phrase, &mut rng));
                findings.push((*name, state));
            }
            let fillers = rng.random_range(usize::from(k == 0)..=cfg.max_fillers.max(1));
            sentences.extend(FILLERS.choose_multiple(&mut rng, fillers).map(|s| s.to_string()));
            sentences.shuffle(&mut rng);
            let ids = ReportIds { note_id: format!("syn-{i:06}"), subject_id: format!("{}", 10_000 + i / 3), hadm_id: String::new() };
            SynthReport { report: Report { ids, text: sentences.join(" ") }, findings }
        })
        .collect()
}
