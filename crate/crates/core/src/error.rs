use nalgebra::DVector;
use thiserror::Error;

/// Errors produced by the flow library.
#[derive(Debug, Error)]
pub enum FlowError {
    #[error("point {coords:?} lies outside the domain of {space}")]
    Domain { space: String, coords: Vec<f64> },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("inner solver did not converge after {restarts} restarts (best objective {objective:e}, gap {gap:e})")]
    Convergence {
        best: DVector<f64>,
        objective: f64,
        gap: f64,
        restarts: usize,
    },

    #[error("inner objective appears unbounded below at step size {tau}: {detail}")]
    Coercivity { tau: f64, detail: String },

    #[error("scheme failed at step {step}: {source}")]
    Scheme {
        step: usize,
        partial: Box<crate::mms::DiscreteSolution>,
        #[source]
        source: Box<FlowError>,
    },
}

pub type Result<T> = std::result::Result<T, FlowError>;

impl FlowError {
    pub(crate) fn domain(space: &str, x: &DVector<f64>) -> Self {
        FlowError::Domain {
            space: space.to_string(),
            coords: x.iter().copied().collect(),
        }
    }
}
