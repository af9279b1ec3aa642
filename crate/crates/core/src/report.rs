use serde::{Deserialize, Serialize};

/// Outcome of a sampled check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub check_name: String,
    pub max_violation: f64,
    pub n_samples: usize,
    pub pass: bool,
}

impl Report {
    /// A report that passes when `max_violation <= tol`. A NaN violation
    /// fails.
    pub fn from_violation(name: impl Into<String>, max_violation: f64, n_samples: usize, tol: f64) -> Self {
        Report {
            check_name: name.into(),
            max_violation,
            n_samples,
            pass: max_violation <= tol,
        }
    }

    /// Folds several reports into one named report.
    pub fn combine(name: impl Into<String>, parts: &[Report]) -> Self {
        Report {
            check_name: name.into(),
            max_violation: parts
                .iter()
                .map(|r| r.max_violation)
                .fold(0.0, |a: f64, b| if b.is_nan() { f64::NAN } else { a.max(b) }),
            n_samples: parts.iter().map(|r| r.n_samples).sum(),
            pass: parts.iter().all(|r| r.pass),
        }
    }
}

/// Running maximum of violations.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Tally {
    pub max: f64,
    pub n: usize,
}

impl Tally {
    pub fn push(&mut self, violation: f64) {
        self.n += 1;
        if violation.is_nan() || violation > self.max {
            self.max = if self.max.is_nan() { self.max } else { violation };
        }
    }

    pub fn report(&self, name: impl Into<String>, tol: f64) -> Report {
        Report::from_violation(name, self.max, self.n, tol)
    }
}
