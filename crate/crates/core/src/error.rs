use thiserror::Error;

/// Errors surfaced by model construction, condition checks and the experiment runner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("gradient at the declared minimizer has norm {norm:e} (> 1e-9)")]
    MinimizerNotCritical { norm: f64 },

    #[error("unknown generating-pair family `{0}`")]
    UnknownFamily(String),

    #[error("unknown cost model `{0}`")]
    UnknownCost(String),

    #[error("generating pair `{0}` does not satisfy Condition C1 and cannot drive the epigraph system")]
    PairNotC1(String),

    #[error("state is not in the strict epigraph: z - J(x) = {gap:e}")]
    EpigraphBoundary { gap: f64 },

    #[error("standing hypotheses unmet: {0}")]
    HypothesesUnmet(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("configuration invalid:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("i/o: {0}")]
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
