use thiserror::Error;

/// Errors raised by the modrec pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("instance contains no samples")]
    EmptyInstance,
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("malformed I/Q file: {0}")]
    FormatError(String),
    #[error("file holds fewer samples than one instance")]
    TruncatedFile,
    #[error("unsupported modulation: {0}")]
    UnsupportedModulation(String),
    #[error("invalid configuration: {0}")]
    ConfigError(String),
    #[error("series of length {n} is too short for window length {l}")]
    SeriesTooShort { n: usize, l: usize },
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("degenerate signal: C21 is not positive")]
    DegenerateSignal,
    #[error("too few samples: need at least {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("feature tag mismatch: model expects {expected}, got {got}")]
    TagMismatch { expected: String, got: String },
    #[error("training labels contain fewer than two classes")]
    DegenerateLabels,
    #[error("too few examples: {0}")]
    TooFewExamples(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
