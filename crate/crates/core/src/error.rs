use thiserror::Error;

/// Errors produced by the characterization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("invalid stochastic matrix: {0}")]
    InvalidStochastic(String),

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("invalid qubit subset: {0}")]
    InvalidSubset(String),

    #[error("invalid noise model: {0}")]
    InvalidModel(String),

    #[error("exponential subset enumeration exceeded: {outcomes} outcomes, cap {cap}")]
    TooManyOutcomes { outcomes: usize, cap: usize },

    #[error("unsupported protocol: {0}")]
    UnsupportedProtocol(String),

    #[error("invalid setting symbol '{0}'")]
    InvalidSymbol(char),

    #[error("uncovered input settings: {0}")]
    Uncovered(String),

    #[error("matrix is singular or ill-conditioned (condition number {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("projection did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("unknown fixture '{0}'")]
    UnknownFixture(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
