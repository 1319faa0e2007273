use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Where a hypothesis verdict comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagSource {
    /// Known for the infinite operator behind the truncation.
    Structural,
    /// Measured on the truncation.
    Numerical,
    /// Taken on faith; no finite check exists.
    Assumed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisFlag {
    pub holds: bool,
    pub source: FlagSource,
    pub detail: String,
}

/// Machine-readable outcome of one scenario. Residuals are written as
/// decimal strings so that readers never see a float rounded twice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub scenario: String,
    pub pass: bool,
    pub residuals: BTreeMap<String, String>,
    pub objects: BTreeMap<String, Value>,
    pub hypothesis_flags: BTreeMap<String, HypothesisFlag>,
    pub timings_ms: BTreeMap<String, f64>,
}

pub fn decimal(x: f64) -> String {
    format!("{x:e}")
}

impl VerificationReport {
    pub fn residual(&self, name: &str) -> Option<f64> {
        self.residuals.get(name).and_then(|s| s.parse().ok())
    }

    pub fn tolerance(&self, name: &str) -> Option<f64> {
        self.objects
            .get("tolerances")
            .and_then(|t| t.get(name))
            .and_then(Value::as_str)
            .and_then(|s| s.parse().ok())
    }

    pub fn error(&self) -> Option<&str> {
        self.objects.get("error").and_then(Value::as_str)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The report with every timing zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        for v in r.timings_ms.values_mut() {
            *v = 0.0;
        }
        r
    }
}

/// Collects residuals against their tolerances while a pipeline runs.
#[derive(Debug, Default)]
pub struct ReportBuilder {
    residuals: BTreeMap<String, (f64, f64)>,
    objects: BTreeMap<String, Value>,
    flags: BTreeMap<String, HypothesisFlag>,
    timings: BTreeMap<String, f64>,
    error: Option<String>,
}

impl ReportBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `value`, which passes when `value <= tolerance`.
    pub fn residual(&mut self, name: &str, value: f64, tolerance: f64) {
        self.residuals.insert(name.to_string(), (value, tolerance));
    }

    pub fn object(&mut self, name: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.objects.insert(name.to_string(), v);
    }

    pub fn flag(&mut self, name: &str, holds: bool, source: FlagSource, detail: impl Into<String>) {
        self.flags.insert(
            name.to_string(),
            HypothesisFlag {
                holds,
                source,
                detail: detail.into(),
            },
        );
    }

    pub fn timing(&mut self, stage: &str, ms: f64) {
        *self.timings.entry(stage.to_string()).or_insert(0.0) += ms;
    }

    pub fn fail(&mut self, message: impl Into<String>) {
        self.error = Some(message.into());
    }

    pub fn finish(mut self, scenario: &str) -> VerificationReport {
        let pass = self.error.is_none() && self.residuals.values().all(|&(v, tol)| v <= tol);
        let tolerances: BTreeMap<String, String> = self
            .residuals
            .iter()
            .map(|(k, &(_, t))| (k.clone(), decimal(t)))
            .collect();
        self.object("tolerances", tolerances);
        if let Some(e) = &self.error {
            self.objects.insert("error".into(), Value::String(e.clone()));
        }
        VerificationReport {
            scenario: scenario.to_string(),
            pass,
            residuals: self.residuals.into_iter().map(|(k, (v, _))| (k, decimal(v))).collect(),
            objects: self.objects,
            hypothesis_flags: self.flags,
            timings_ms: self.timings,
        }
    }
}
