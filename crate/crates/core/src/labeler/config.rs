use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::labeler::normalize_text;

const DEFAULT_CONFIG: &str = include_str!("default_config.json");

/// Where a cue may sit relative to the mention it modifies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueScope {
    /// Anywhere in the mention's context window.
    #[default]
    Window,
    /// Only before the mention within the window.
    PreMention,
}

/// A condition keyword. With `plural`, a trailing `s` is accepted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Keyword {
    pub phrase: String,
    pub plural: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditionRules {
    pub name: String,
    /// Sorted longest phrase first.
    pub keywords: Vec<Keyword>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelerConfig {
    pub conditions: Vec<ConditionRules>,
    pub negation_cues: Vec<String>,
    pub uncertainty_cues: Vec<String>,
    pub no_finding_patterns: Vec<String>,
    pub window_chars: usize,
    pub cue_scope: CueScope,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawKeyword {
    Plain(String),
    Detailed {
        phrase: String,
        #[serde(default = "plural_default")]
        plural: bool,
    },
}

fn plural_default() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    conditions: Vec<String>,
    keywords: BTreeMap<String, Vec<RawKeyword>>,
    negation_cues: Vec<String>,
    uncertainty_cues: Vec<String>,
    no_finding_patterns: Vec<String>,
    window_chars: usize,
    #[serde(default)]
    cue_scope: CueScope,
}

fn phrases(kind: &str, raw: Vec<String>) -> Result<Vec<String>> {
    raw.into_iter()
        .map(|p| {
            let n = normalize_text(&p);
            if n.is_empty() {
                Err(Error::config(format!("empty entry in {kind}")))
            } else {
                Ok(n)
            }
        })
        .collect()
}

impl LabelerConfig {
    /// The shipped rule set: 13 conditions and the default cue lists.
    pub fn default_rules() -> Self {
        Self::from_json(DEFAULT_CONFIG).expect("bundled labeler config is valid")
    }

    pub fn default_json() -> &'static str {
        DEFAULT_CONFIG
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Parses and validates a rule set. Phrases are normalized the same way
    /// as report text.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::json("labeler config", e))?;
        let mut seen = HashSet::new();
        let mut conditions = Vec::with_capacity(raw.conditions.len());
        for name in &raw.conditions {
            if !seen.insert(name.clone()) {
                return Err(Error::config(format!("duplicate condition {name}")));
            }
            let kws = raw
                .keywords
                .remove(name)
                .ok_or_else(|| Error::config(format!("condition {name} has no keyword list")))?;
            let mut keywords = Vec::with_capacity(kws.len());
            for k in kws {
                let (phrase, plural) = match k {
                    RawKeyword::Plain(p) => (p, true),
                    RawKeyword::Detailed { phrase, plural } => (phrase, plural),
                };
                let phrase = normalize_text(&phrase);
                if phrase.is_empty() {
                    return Err(Error::config(format!("empty keyword for {name}")));
                }
                keywords.push(Keyword { phrase, plural });
            }
            if keywords.is_empty() {
                return Err(Error::config(format!("condition {name} has no keywords")));
            }
            // Stable sort keeps config order among equal lengths.
            keywords.sort_by_key(|k| std::cmp::Reverse(k.phrase.len()));
            conditions.push(ConditionRules { name: name.clone(), keywords });
        }
        if let Some(extra) = raw.keywords.keys().next() {
            return Err(Error::config(format!("keywords given for unknown condition {extra}")));
        }
        if raw.window_chars == 0 {
            return Err(Error::config("window_chars must be positive"));
        }
        Ok(LabelerConfig {
            conditions,
            negation_cues: phrases("negation_cues", raw.negation_cues)?,
            uncertainty_cues: phrases("uncertainty_cues", raw.uncertainty_cues)?,
            no_finding_patterns: phrases("no_finding_patterns", raw.no_finding_patterns)?,
            window_chars: raw.window_chars,
            cue_scope: raw.cue_scope,
        })
    }

    pub fn condition_names(&self) -> impl Iterator<Item = &str> {
        self.conditions.iter().map(|c| c.name.as_str())
    }

    pub fn condition_index(&self, name: &str) -> Option<usize> {
        self.conditions.iter().position(|c| c.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rules_load() {
        let cfg = LabelerConfig::default_rules();
        assert_eq!(cfg.conditions.len(), 13);
        assert_eq!(cfg.conditions[0].name, "enlarged_cardiomediastinum");
        assert_eq!(cfg.window_chars, 120);
        assert_eq!(cfg.cue_scope, CueScope::Window);
        for required in ["no", "without", "negative for", "no evidence of", "absent", "resolved", "free of", "rather than"] {
            assert!(cfg.negation_cues.iter().any(|c| c == required), "{required}");
        }
        for required in ["possible", "possibly", "likely", "may", "cannot exclude", "cannot be excluded", "suggests", "suspicious for", "concerning for", "questionable"] {
            assert!(cfg.uncertainty_cues.iter().any(|c| c == required), "{required}");
        }
        let effusion = &cfg.conditions[cfg.condition_index("pleural_effusion").unwrap()];
        assert_eq!(effusion.keywords[0].phrase, "pleural effusion");
        let lesion = &cfg.conditions[cfg.condition_index("lung_lesion").unwrap()];
        assert!(lesion.keywords.iter().any(|k| k.phrase == "masses" && !k.plural));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = |conds: &str, kws: &str| {
            format!(
                r#"{{"conditions":{conds},"keywords":{kws},"negation_cues":["no"],"uncertainty_cues":["may"],"no_finding_patterns":["normal"],"window_chars":10}}"#
            )
        };
        assert!(LabelerConfig::from_json(&base(r#"["a"]"#, r#"{"a":["x"]}"#)).is_ok());
        assert!(LabelerConfig::from_json(&base(r#"["a","a"]"#, r#"{"a":["x"]}"#)).is_err());
        assert!(LabelerConfig::from_json(&base(r#"["a"]"#, r#"{"a":["x"],"b":["y"]}"#)).is_err());
        assert!(LabelerConfig::from_json(&base(r#"["a"]"#, r#"{"a":["  "]}"#)).is_err());
        assert!(LabelerConfig::from_json(&base(r#"["a"]"#, r#"{}"#)).is_err());
    }
}
