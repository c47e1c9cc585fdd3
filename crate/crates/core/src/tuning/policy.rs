use std::fmt;

use glob::Pattern;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GptConfig, ModelParams, ParamSpec};

/// Which parameters receive gradients and updates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FreezePolicy {
    /// Only the classification head.
    HeadOnly,
    /// The final transformer block, the final layer norm and the head.
    Selective,
    /// Everything.
    Full,
    /// Parameters whose names match any of the glob patterns.
    Custom(Vec<String>),
}

impl TryFrom<String> for FreezePolicy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Self::parse(&s)
    }
}

impl From<FreezePolicy> for String {
    fn from(p: FreezePolicy) -> String {
        p.name()
    }
}

impl FreezePolicy {
    pub const STANDARD: [FreezePolicy; 3] = [FreezePolicy::HeadOnly, FreezePolicy::Selective, FreezePolicy::Full];

    /// `head-only`, `selective`, `full`, or `custom:PAT[,PAT...]`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "head-only" | "head" | "head_only" | "headonly" => Ok(FreezePolicy::HeadOnly),
            "selective" => Ok(FreezePolicy::Selective),
            "full" => Ok(FreezePolicy::Full),
            _ => match s.strip_prefix("custom:") {
                Some(list) => Ok(FreezePolicy::Custom(list.split(',').map(|p| p.trim().to_string()).collect())),
                None => Err(Error::config(format!(
                    "unknown policy {s:?}; expected head-only, selective, full or custom:PATTERNS"
                ))),
            },
        }
    }

    pub fn name(&self) -> String {
        match self {
            FreezePolicy::HeadOnly => "head-only".into(),
            FreezePolicy::Selective => "selective".into(),
            FreezePolicy::Full => "full".into(),
            FreezePolicy::Custom(p) => format!("custom:{}", p.join(",")),
        }
    }

    /// Per-spec trainability flags in canonical order.
    pub fn resolve(&self, cfg: &GptConfig) -> Result<Vec<bool>> {
        let specs = cfg.param_specs();
        let head = |s: &ParamSpec| s.name.starts_with("head.");
        let top = cfg.n_layer.checked_sub(1);
        Ok(match self {
            FreezePolicy::HeadOnly => specs.iter().map(head).collect(),
            FreezePolicy::Selective => specs
                .iter()
                .map(|s| head(s) || s.name.starts_with("lnf.") || (s.block.is_some() && s.block == top))
                .collect(),
            FreezePolicy::Full => vec![true; specs.len()],
            FreezePolicy::Custom(patterns) => {
                let mut flags = vec![false; specs.len()];
                for p in patterns {
                    let pat = Pattern::new(p).map_err(|e| Error::config(format!("bad pattern {p:?}: {e}")))?;
                    let mut hit = false;
                    for (f, s) in flags.iter_mut().zip(&specs) {
                        if pat.matches(&s.name) {
                            *f = true;
                            hit = true;
                        }
                    }
                    if !hit {
                        return Err(Error::config(format!("pattern {p:?} matches no parameter")));
                    }
                }
                flags
            }
        })
    }

    pub fn trainable_names(&self, cfg: &GptConfig) -> Result<Vec<String>> {
        let flags = self.resolve(cfg)?;
        Ok(cfg.param_specs().into_iter().zip(flags).filter(|(_, f)| *f).map(|(s, _)| s.name).collect())
    }
}

impl fmt::Display for FreezePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Marks exactly the policy's parameters trainable; all others become frozen
/// and lose any stored gradient.
pub fn apply_policy(params: &mut ModelParams, policy: &FreezePolicy) -> Result<()> {
    let flags = policy.resolve(params.config())?;
    for ((_, t), f) in params.iter_mut().zip(flags) {
        t.set_requires_grad(f);
    }
    Ok(())
}
