use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("invalid density operator: {0}")]
    InvalidState(String),

    #[error("state is not faithful (smallest eigenvalue {0:e})")]
    NotFaithful(f64),

    #[error("no faithful stationary state")]
    NoFaithfulStationaryState,

    #[error("generator is not KMS-symmetric (deviation {0:e})")]
    NotKmsSymmetric(f64),

    #[error("jump operators violate the modular alignment condition (residual {0:e})")]
    AlignmentFailed(f64),

    #[error("jump operators are not modular eigenvectors; Bohr frequencies unavailable")]
    NoBohrFrequencies,

    #[error("dimension {dim} exceeds guard {guard}")]
    DimensionGuard { dim: usize, guard: usize },

    #[error("threshold r[{index}] = {value} is negative")]
    NegativeThreshold { index: usize, value: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("hypothesis not attested: {0}")]
    HypothesisNotAttested(String),

    #[error("unbounded direction: {0}")]
    UnboundedDirection(String),

    #[error("every simulated path was invalid")]
    AllPathsInvalid,

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_) | Error::AllPathsInvalid | Error::NoFaithfulStationaryState
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
