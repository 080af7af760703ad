use thiserror::Error;

/// Errors raised while building models, estimating blocks or running the recursion.
#[derive(Debug, Error)]
pub enum PcrbError {
    #[error("lag {name}={value} exceeds the supported maximum of {max}")]
    LagTooLarge {
        name: &'static str,
        value: usize,
        max: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("model does not supply closed-form {0} blocks")]
    MissingAnalyticBlocks(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("singular matrix in {context} (reciprocal condition {rcond:.3e})")]
    Singular { context: String, rcond: f64 },

    #[error("{context} is not positive semidefinite (min eigenvalue {min_eig:.3e}, max {max_eig:.3e})")]
    NotPositiveSemidefinite {
        context: String,
        min_eig: f64,
        max_eig: f64,
    },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("unsupported model for {baseline}: {reason}")]
    Unsupported {
        baseline: &'static str,
        reason: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl PcrbError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            PcrbError::NonFinite(_)
                | PcrbError::Singular { .. }
                | PcrbError::NotPositiveSemidefinite { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, PcrbError>;
