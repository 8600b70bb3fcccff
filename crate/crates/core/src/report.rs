//! JSON report, schema `cartan-kit/1`.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

pub const SCHEMA: &str = "cartan-kit/1";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub pass: bool,
    /// Set when the inputs could not be loaded; no task ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub tasks: Vec<TaskReport>,
}

impl Report {
    pub fn new(seed: u64, inputs: Vec<String>, tasks: Vec<TaskReport>) -> Self {
        Report {
            schema: SCHEMA,
            seed,
            inputs,
            pass: tasks.iter().all(|t| t.pass),
            error: None,
            tasks,
        }
    }

    /// A report for a run that stopped before any task executed.
    pub fn failed(seed: u64, inputs: Vec<String>, error: String) -> Self {
        Report {
            schema: SCHEMA,
            seed,
            inputs,
            pass: false,
            error: Some(error),
            tasks: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskReport {
    pub kind: String,
    pub name: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub checks: Vec<Check>,
    pub details: BTreeMap<String, Value>,
}

impl TaskReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// One comparison of an observed value against an expectation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: Value,
    /// e.g. `<= 1e-7` or `= so3`.
    pub expected: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub seed: u64,
    pub pass: bool,
}

/// JSON number, or `null` for non-finite values.
pub fn number(v: f64) -> Value {
    serde_json::Number::from_f64(v)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}
