use std::path::PathBuf;

/// Errors produced by the topic extraction engine and its evaluation code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected \"TPCL\", found {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("unknown stage code {0}")]
    UnknownStage(u8),
    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("trailing data: expected {expected} bytes, found {found}")]
    TrailingData { expected: u64, found: u64 },
    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("row {row} is not unit length (norm {norm})")]
    NotNormalized { row: usize, norm: f64 },
    #[error("malformed corpus line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("duplicate doc_id {doc_id:?} at line {line}")]
    DuplicateDocId { doc_id: String, line: usize },
    #[error("partial gold labels: line {line} disagrees with line 1 on label presence")]
    PartialGoldLabels { line: usize },
    #[error("gold label {label} at line {line} outside [0, {n_labels})")]
    GoldLabelOutOfRange {
        label: usize,
        line: usize,
        n_labels: usize,
    },
    #[error("malformed assignment file: {0}")]
    MalformedAssignment(String),
    #[error("topic {topic} at row {row} outside [0, {k})")]
    TopicOutOfRange { topic: usize, row: usize, k: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("zero-norm row {row}")]
    ZeroNorm { row: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("fewer than 2 items")]
    TooFewItems,
    #[error("fewer than 2 populated classes ({populated} of {k})")]
    SinglePopulatedClass { populated: usize, k: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unknown word {0:?}")]
    UnknownWord(String),
    #[error("empty corpus after tokenization")]
    EmptyCorpus,
    #[error("topic {topic} has fewer than 2 in-vocabulary words")]
    TooFewTopicWords { topic: usize },
    #[error("topic {0} has no documents")]
    EmptyTopic(usize),
    #[error("constant input vector; rank correlation undefined")]
    ConstantInput,
    #[error("noise probability {0} outside [0, 1]")]
    NoiseOutOfRange(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
