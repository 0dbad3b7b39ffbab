use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    Lattice(String),
    #[error("lattice mismatch")]
    LatticeMismatch,
    #[error("support violation: {0}")]
    Support(String),
    #[error("solver instability: {0}")]
    Cfl(String),
    #[error("degenerate vacuum: {0}")]
    ZeroModes(String),
    #[error("state check failed: {0}")]
    StateCheck(String),
    #[error("grade overflow: {0} > {1}")]
    GradeOverflow(usize, usize),
    #[error("non-local functional passed where a local one is required")]
    NonLocal,
    #[error("too many factors: {0}")]
    TooManyFactors(usize),
    #[error("ill-conditioned fit (condition number {0:.3e})")]
    IllConditioned(f64),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
