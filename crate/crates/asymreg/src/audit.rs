//! Shared report type for sample-based inequality audits.

use serde::Serialize;

/// One failed check inside an audit.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    /// Which inequality or identity was violated.
    pub check: String,
    /// Index of the offending sample or trace step.
    pub sample: usize,
    pub lhs: f64,
    pub rhs: f64,
    /// Amount by which the allowed slack was exceeded (always > 0).
    pub excess: f64,
}

/// Outcome of auditing a family of inequalities over a sample set.
///
/// `worst_excess` is the largest `lhs - rhs - slack` seen over all checks;
/// it is negative when everything passed with margin.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub name: String,
    pub checks: usize,
    pub violations: Vec<Violation>,
    pub worst_excess: f64,
    /// Worst observed ratio lhs/rhs for ratio-style audits (Lipschitz).
    pub worst_ratio: Option<f64>,
    /// RNG seed used to draw the samples, when they were pseudo-random.
    pub seed: Option<u64>,
}

impl AuditReport {
    pub fn new(name: impl Into<String>) -> Self {
        AuditReport {
            name: name.into(),
            checks: 0,
            violations: Vec::new(),
            worst_excess: f64::NEG_INFINITY,
            worst_ratio: None,
            seed: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Record one check of `lhs <= rhs + slack`.
    pub fn check_le(&mut self, check: &str, sample: usize, lhs: f64, rhs: f64, slack: f64) {
        self.checks += 1;
        let excess = lhs - rhs - slack;
        if excess > self.worst_excess {
            self.worst_excess = excess;
        }
        if excess > 0.0 {
            self.violations.push(Violation {
                check: check.to_string(),
                sample,
                lhs,
                rhs,
                excess,
            });
        }
    }

    /// Record one check of `|lhs - rhs| <= tol`.
    pub fn check_eq(&mut self, check: &str, sample: usize, lhs: f64, rhs: f64, tol: f64) {
        self.checks += 1;
        let excess = (lhs - rhs).abs() - tol;
        if excess > self.worst_excess {
            self.worst_excess = excess;
        }
        if excess > 0.0 {
            self.violations.push(Violation {
                check: check.to_string(),
                sample,
                lhs,
                rhs,
                excess,
            });
        }
    }

    pub fn observe_ratio(&mut self, ratio: f64) {
        let cur = self.worst_ratio.unwrap_or(f64::NEG_INFINITY);
        if ratio > cur {
            self.worst_ratio = Some(ratio);
        }
    }
}
