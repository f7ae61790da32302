//! Experiment configuration: the JSON accepted by `run --config`, and the
//! form every experiment subcommand is converted into.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    /// Number of parallel repetitions.
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    /// Repetitions allowed to hold a preimage, for the bound check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keys: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuits: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_queries: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    /// Overrides of named tolerances; only tighter values are accepted.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: &str, seed: u64) -> Self {
        ExperimentConfig {
            experiment: experiment.to_string(),
            seed,
            family: None,
            n: None,
            repetitions: None,
            l: None,
            trials: None,
            keys: None,
            circuits: None,
            max_queries: None,
            strategy: None,
            profile: None,
            tolerances: BTreeMap::new(),
            out: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).context("invalid experiment config")
    }
}

/// Which direction a tolerance may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    /// A metric must stay at or below the tolerance.
    Upper,
    /// A metric must reach at least the tolerance.
    Lower,
}

/// Default tolerances per experiment; overrides may only tighten them.
pub fn tolerance(cfg: &ExperimentConfig, name: &str, default: f64, bound: Bound) -> Result<f64> {
    let Some(&v) = cfg.tolerances.get(name) else {
        return Ok(default);
    };
    let looser = match bound {
        Bound::Upper => v > default,
        Bound::Lower => v < default,
    };
    if !v.is_finite() || looser {
        bail!("tolerance '{name}' = {v} is looser than the default {default}");
    }
    Ok(v)
}

/// Rejects tolerance names the experiment does not use.
pub fn check_tolerance_names(cfg: &ExperimentConfig, known: &[&str]) -> Result<()> {
    for k in cfg.tolerances.keys() {
        if !known.contains(&k.as_str()) {
            bail!(
                "experiment '{}' has no tolerance named '{k}'",
                cfg.experiment
            );
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerances_may_only_tighten() {
        let mut c = ExperimentConfig::new("oracle-equiv", 1);
        assert_eq!(tolerance(&c, "tv", 1e-9, Bound::Upper).unwrap(), 1e-9);
        c.tolerances.insert("tv".into(), 1e-12);
        assert_eq!(tolerance(&c, "tv", 1e-9, Bound::Upper).unwrap(), 1e-12);
        c.tolerances.insert("tv".into(), 1e-6);
        assert!(tolerance(&c, "tv", 1e-9, Bound::Upper).is_err());
        c.tolerances.insert("rate".into(), 0.1);
        assert!(tolerance(&c, "rate", 0.2, Bound::Lower).is_err());
        assert!(check_tolerance_names(&c, &["tv"]).is_err());
    }

    #[test]
    fn seed_is_required_and_unknown_fields_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"experiment":"suite"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiment":"suite","seed":1,"x":0}"#).is_err());
        let c = ExperimentConfig::from_json(r#"{"experiment":"bound-check","seed":1,"L":3,"l":1}"#)
            .unwrap();
        assert_eq!((c.repetitions, c.l), (Some(3), Some(1)));
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
