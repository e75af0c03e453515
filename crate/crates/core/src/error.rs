use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GisError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("structural mismatch: {0}")]
    Mismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite state in cell {cell} while propagating")]
    Overflow { cell: usize },

    #[error("z = {re} + {im}i is at or near an eigenvalue")]
    NearEigenvalue { re: f64, im: f64 },

    #[error("resolvent is singular at z = {re} + {im}i")]
    SingularResolvent { re: f64, im: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid family: {0}")]
    InvalidFamily(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
}

impl GisError {
    /// True for failures of the numerics (overflow, eigenvalue hits,
    /// iteration caps) as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            GisError::Overflow { .. }
                | GisError::NearEigenvalue { .. }
                | GisError::SingularResolvent { .. }
                | GisError::NonConvergence(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, GisError>;
