use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid label {label} for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("no usable row: every bias-gradient entry is below {0:e}")]
    NoUsableRow(f64),

    #[error("undefined direction: cosine distance of a zero vector")]
    UndefinedDirection,

    #[error("empty shard for client {0}")]
    EmptyShard(usize),

    #[error("unequal shard sizes: {0}")]
    UnequalShards(String),

    #[error("no messages to aggregate")]
    NoMessages,

    #[error("input dimension {dim} exceeds the finite-difference budget of {budget}")]
    OverBudget { dim: usize, budget: usize },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("bad magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
