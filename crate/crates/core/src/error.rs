use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("SVD did not converge for a {rows}x{cols} matrix")]
    SvdNotConverged { rows: usize, cols: usize },

    #[error("invalid encoder configuration: {0}")]
    InvalidEncoder(String),

    #[error("zero-norm feature vector cannot be amplitude encoded")]
    ZeroNorm,

    #[error("basic qubit encoding requires binary features, found {0}")]
    NonBinary(f64),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("sample {index}: {source}")]
    Sample { index: usize, source: Box<Error> },

    #[error("regularization required: kernel matrix is singular (min eigenvalue {min_eigenvalue:.3e}) and chi = 0")]
    RegularizationRequired { min_eigenvalue: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("wavefunction is in the {found} basis, operation requires {expected}")]
    WrongBasis { expected: &'static str, found: &'static str },

    #[error("coordinate ({q1}, {q2}) is not a grid point")]
    OffGrid { q1: f64, q2: f64 },

    #[error("measurement density is identically zero")]
    DegenerateDensity,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("step {step} ({name}): {source}")]
    Step { step: u8, name: &'static str, source: Box<Error> },
}

impl Error {
    pub(crate) fn at_sample(self, index: usize) -> Error {
        Error::Sample { index, source: Box::new(self) }
    }

    pub(crate) fn at_step(self, step: u8, name: &'static str) -> Error {
        Error::Step { step, name, source: Box::new(self) }
    }

    /// True when the failure originates from bad input data rather than
    /// from the numerics.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Sample { source, .. } | Error::Step { source, .. } => source.is_data_error(),
            Error::ZeroNorm
            | Error::NonBinary(_)
            | Error::InvalidDataset(_)
            | Error::NonFinite(_)
            | Error::DimensionMismatch(_) => true,
            _ => false,
        }
    }
}
