//! Experiment reports and their schema check.

use std::collections::BTreeMap;

use anyhow::{anyhow, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ExperimentConfig;

pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: String,
    pub description: String,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    pub experiment: String,
    pub config: ExperimentConfig,
    /// Deterministic given the config.
    pub metrics: BTreeMap<String, Value>,
    pub criteria: Vec<CriterionOutcome>,
    pub pass: bool,
    pub notes: Vec<String>,
    /// Wall-clock seconds, per stage where available; not deterministic.
    pub timings: BTreeMap<String, f64>,
    pub wall_clock_s: f64,
}

impl Report {
    pub fn new(config: &ExperimentConfig) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: config.experiment.clone(),
            config: config.clone(),
            metrics: BTreeMap::new(),
            criteria: Vec::new(),
            pass: true,
            notes: Vec::new(),
            timings: BTreeMap::new(),
            wall_clock_s: 0.0,
        }
    }

    pub fn metric(&mut self, name: &str, v: impl Serialize) {
        self.metrics.insert(name.to_string(), serde_json::json!(v));
    }

    pub fn criterion(
        &mut self,
        id: &str,
        description: &str,
        pass: bool,
        detail: impl Into<String>,
    ) {
        self.pass &= pass;
        self.criteria.push(CriterionOutcome {
            id: id.to_string(),
            description: description.to_string(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    /// Pretty JSON, checked against the shipped schema.
    pub fn to_json(&self) -> Result<String> {
        let v = serde_json::to_value(self)?;
        validate(&v)?;
        Ok(serde_json::to_string_pretty(&v)? + "\n")
    }
}

/// Validates a report value against the shipped schema.
pub fn validate(report: &Value) -> Result<()> {
    let schema: Value = serde_json::from_str(REPORT_SCHEMA)?;
    let validator =
        jsonschema::validator_for(&schema).map_err(|e| anyhow!("report schema is invalid: {e}"))?;
    let errors: Vec<String> = validator
        .iter_errors(report)
        .map(|e| e.to_string())
        .collect();
    if !errors.is_empty() {
        return Err(anyhow!(
            "report does not match its schema: {}",
            errors.join("; ")
        ));
    }
    Ok(())
}
