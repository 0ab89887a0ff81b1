use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("series too short for lag order (T = {len}, p = {lag})")]
    SeriesTooShort { len: usize, lag: usize },

    #[error("series index {index} out of range for {count} series")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("graphs have different node counts ({left} vs {right})")]
    NodeCountMismatch { left: usize, right: usize },

    #[error("invalid edge ({0}, {1})")]
    InvalidEdge(usize, usize),

    #[error("degenerate design")]
    DegenerateDesign,

    #[error("backfitting diverged")]
    BackfittingDiverged,

    #[error("kernel matrix not PD")]
    KernelNotPositiveDefinite,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("length mismatch ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("csv error at row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("dot parse error at line {line}: {message}")]
    Dot { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
