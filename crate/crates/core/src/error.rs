use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("range error: {0}")]
    Range(String),
    #[error("unsupported dimension {0}; expected 1, 2 or 3")]
    Dimension(usize),
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("transform headroom exceeded: |{0}| > 2^{1}")]
    Overflow(i64, u32),
    #[error("corrupt stream: {0}")]
    CorruptStream(String),
    #[error("index {0:?} outside array extents {1:?}")]
    Index(Vec<usize>, Vec<usize>),
    #[error("tolerance infeasible: {0}")]
    InfeasibleTolerance(String),
    #[error("contraction violated: {0}")]
    ContractionViolated(String),
    #[error("extra-iteration bound infeasible: C = {c} exceeds L^(t+1) = {limit}")]
    Infeasible { c: f64, limit: f64 },
    #[error("block dominance violated in block row {0}")]
    DominanceViolated(usize),
    #[error("spectral condition violated: {0}")]
    SpectralViolation(String),
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("operator kind does not support this query: {0}")]
    Kind(String),
    #[error("size {0} above dense threshold {1}")]
    Size(usize, usize),
    #[error("singular splitting: {0}")]
    SingularSplit(String),
    #[error("divergence guard tripped at step {step}: norm {norm}")]
    Divergence { step: usize, norm: f64 },
    #[error("stability condition violated: {0}")]
    Stability(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
