use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate sample: {0}")]
    DegenerateSample(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("importance sampler rejected {0} consecutive draws outside the prior support")]
    SamplerAbort(usize),

    #[error("generation {generation} hit the proposal ceiling of {ceiling} without meeting its stopping condition")]
    ProposalCeiling { generation: usize, ceiling: usize },

    #[error("generation {generation} is degenerate: {reason}")]
    DegenerateGeneration { generation: usize, reason: String },

    #[error("importance function vanishes at cached particle {index} inside the prior support")]
    InvalidImportanceSupport { index: usize },

    #[error("empty particle cache")]
    EmptyCache,

    #[error("ODE solver failure: {0}")]
    Solver(String),

    #[error("no half-way crossing of R(t) found; try a different seed")]
    NoCrossing,

    #[error("cache file: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed cache record at row {row}: {reason}")]
    MalformedRecord { row: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
