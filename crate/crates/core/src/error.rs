use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("commitment q = {0} is outside [0, 1]")]
    QOutOfRange(f64),

    #[error("probability {0} is outside (0, 1]")]
    ProbabilityDomain(f64),

    /// A loss or gradient was requested at a success probability of exactly zero.
    #[error("success probability is zero (cold-zero): {0}")]
    ColdZero(String),

    #[error("invalid simplex point: {0}")]
    Simplex(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("latent space of size {size} exceeds enumeration cap {cap}")]
    EnumerationCap { size: usize, cap: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Every log weight in a sample pool is -inf.
    #[error("degenerate pool: all {0} likelihood weights underflow")]
    DegeneratePool(usize),

    /// Importance resampling cannot proceed because no particle carries weight.
    #[error("particle degeneracy: all {0} resampling weights underflow")]
    ParticleDegeneracy(usize),

    #[error("pool of size {got} is too small, need at least {need}")]
    PoolTooSmall { got: usize, need: usize },

    #[error("target {target} is unreachable: {reason}")]
    UnreachableTarget { target: f64, reason: String },

    #[error("insufficient grid: {0}")]
    InsufficientGrid(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
