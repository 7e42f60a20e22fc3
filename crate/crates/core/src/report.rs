//! Named pass/fail checks with residuals.

use serde::{Deserialize, Serialize};

/// Version tag carried by every serialized report.
pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub check: String,
    pub pass: bool,
    pub residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, pass: bool, residual: f64) {
        self.checks.push(Check { check: name.to_string(), pass, residual });
    }

    /// Pass iff `residual ≤ tol`.
    pub fn push_tol(&mut self, name: &str, residual: f64, tol: f64) {
        self.push(name, residual <= tol, residual);
    }

    pub fn extend(&mut self, prefix: &str, other: ValidationReport) {
        for c in other.checks {
            self.checks.push(Check { check: format!("{prefix}{}", c.check), ..c });
        }
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn max_residual(&self) -> f64 {
        self.checks.iter().map(|c| c.residual).filter(|r| r.is_finite()).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.check == name)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}
