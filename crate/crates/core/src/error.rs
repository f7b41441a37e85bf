use thiserror::Error;

#[derive(Debug, Error)]
pub enum IrpgError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("coordinate length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerically singular system: {0}")]
    Singular(String),

    /// The subproblem solver hit its iteration cap without certifying a
    /// direction. Callers react by increasing the proximal parameter.
    #[error("subproblem solver stopped after {iterations} iterations without a certificate")]
    Escalate { iterations: usize },

    #[error("malformed matrix file: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, IrpgError>;

pub(crate) fn check_shape(expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(IrpgError::ShapeMismatch { expected, got })
    }
}
