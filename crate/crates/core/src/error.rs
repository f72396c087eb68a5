use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("charge-balance solver did not converge after {iterations} iterations (residual {residual_fc:e} fC)")]
    SolverDivergence { iterations: usize, residual_fc: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("word line {index} out of range ({len} cells)")]
    WordLineOutOfRange { index: usize, len: usize },
}

impl SimError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        SimError::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
