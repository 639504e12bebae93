//! Run reports and their canonical serialization.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// How a measured value is compared with its limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "==")]
    Equal,
}

/// One pass/fail check with the values it was decided on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, relation: Relation::AtMost, limit, passed: value <= limit }
    }
    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, relation: Relation::AtLeast, limit, passed: value >= limit }
    }
    pub fn equal(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, relation: Relation::Equal, limit, passed: value == limit }
    }
    /// `|value − target| ≤ tolerance`, stored as a deviation.
    pub fn within(name: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        Check::at_most(name, (value - target).abs(), tolerance)
    }
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Check::equal(name, if ok { 1.0 } else { 0.0 }, 1.0)
    }
}

/// Everything a run records; wall time lives in a separate sidecar file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub result: Value,
    pub artifacts: Vec<String>,
    pub error: Option<String>,
}

impl RunReport {
    pub fn new(command: &str, config_hash: String, seed: Option<u64>) -> Self {
        RunReport { command: command.to_string(), config_hash, seed, result: Value::Null, ..Default::default() }
    }

    /// Recomputes `passed` from the stored checks.
    pub fn settle(&mut self) {
        self.passed = self.error.is_none() && self.checks.iter().all(|c| c.passed);
    }

    /// Canonical JSON text: sorted keys, two-space indentation, trailing newline.
    pub fn to_canonical_json(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("report serializes"))
    }
}

/// Rebuilds every object with its keys in sorted order.
pub fn canonical(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let mut out = Map::new();
            for (k, v) in entries {
                out.insert(k, canonical(v));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonical).collect()),
        other => other,
    }
}

pub fn canonical_json(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(&canonical(value.clone())).expect("value serializes");
    text.push('\n');
    text
}
