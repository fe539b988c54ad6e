//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate entry id: {0}")]
    DuplicateId(String),
    #[error("invariant violation [{name}]: {detail}")]
    InvariantViolation { name: &'static str, detail: String },
    #[error("RLE area mismatch: runs sum to {runs_sum}, expected {expected}")]
    AreaMismatch { runs_sum: usize, expected: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("blob format version mismatch: found {found}, expected {expected}")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("corrupt manifest at line {line}: {detail}")]
    CorruptManifest { line: usize, detail: String },
    #[error("no contact found: no frame reaches the overlap threshold")]
    NoContactFound,
    #[error("insufficient points: {got} hand detections, need at least {need}")]
    InsufficientPoints { got: usize, need: usize },
    #[error("too few points: {got}, need at least {need}")]
    TooFewPoints { got: usize, need: usize },
    #[error("non-monotonic time: frame indices must be strictly increasing")]
    NonMonotonicTime,
    #[error("empty bitmap: no foreground pixels")]
    EmptyBitmap,
    #[error("empty text: cannot embed a text with no tokens")]
    EmptyText,
    #[error("dimension mismatch: {context} (got {got}, expected {expected})")]
    DimMismatch {
        context: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("empty index: nothing to search")]
    EmptyIndex,
    #[error("merge count {r} too large for sets of sizes {a} and {b}")]
    RTooLarge { r: usize, a: usize, b: usize },
    #[error("shape mismatch: {context} ({got_rows}x{got_cols} vs {want_rows}x{want_cols})")]
    ShapeMismatch {
        context: &'static str,
        got_rows: usize,
        got_cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("empty dataset: training requires at least one demo")]
    EmptyDataset,
    #[error("scripted expert failed: {0}")]
    ExpertFailure(String),
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn invariant(name: &'static str, detail: impl Into<String>) -> Self {
        Error::InvariantViolation {
            name,
            detail: detail.into(),
        }
    }

    /// True for errors caused by user-supplied inputs (bad files, bad
    /// queries) rather than internal failures. The CLI maps these to
    /// exit code 2.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}
