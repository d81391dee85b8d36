use thiserror::Error;

/// Errors produced by the quantization toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported dimension {0}; only d = 1 and d = 2 are handled")]
    UnsupportedDimension(usize),

    #[error("clusters {i} and {j} coincide")]
    DuplicateClusters { i: usize, j: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty sample")]
    EmptySample,

    #[error("sample has {n} points but {k} clusters were requested")]
    TooFewPoints { n: usize, k: usize },

    #[error("the distribution is atomic and has no density")]
    NoDensity,

    #[error("non-finite integrand value at {0:?}")]
    NonFiniteIntegrand(Vec<f64>),

    #[error("quadrature did not converge: {0}")]
    QuadratureFailure(String),

    #[error("certification failed: {0}")]
    CertificationFailed(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("instance too large for exhaustive search ({0} candidates)")]
    InstanceTooLarge(u128),
}

pub type Result<T> = std::result::Result<T, Error>;
