use thiserror::Error;

use crate::reconstruct::ReconstructionReport;

/// Errors raised by the numerical pipeline.
///
/// `Validation` covers bad inputs (shapes, ranges, supports); the remaining
/// variants are numerical failures that a caller may want to report
/// differently.
#[derive(Debug, Error)]
pub enum TatError {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("time step {dt} exceeds the stability limit {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("padding of {pad} nodes is too small for T = {t_final}: need at least {needed}")]
    Padding { pad: usize, needed: usize, t_final: f64 },

    #[error("conjugate gradients did not converge in {iterations} iterations (last relative residual {last:.3e})")]
    CgNotConverged {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("Neumann iteration diverged after {} iterations", report.iterations.len())]
    Diverged { report: Box<ReconstructionReport> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed file: {0}")]
    Format(String),
}

impl TatError {
    /// True for failures of an iterative method, as opposed to invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, TatError::CgNotConverged { .. } | TatError::Diverged { .. })
    }
}

pub type Result<T> = std::result::Result<T, TatError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(TatError::Validation(msg.into()))
}
