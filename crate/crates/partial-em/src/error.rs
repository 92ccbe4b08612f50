//! Error type shared across the crate.

use thiserror::Error;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A covariance matrix could not be factorized even after ridge escalation.
    #[error("singular covariance: factorization failed after escalating ridge to {applied_ridge:e}")]
    SingularCovariance { applied_ridge: f64 },

    /// Vector/matrix dimensions disagree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Two matrices that must share a shape do not.
    #[error("shape mismatch: {a_rows}x{a_cols} vs {b_rows}x{b_cols}")]
    ShapeMismatch {
        a_rows: usize,
        a_cols: usize,
        b_rows: usize,
        b_cols: usize,
    },

    /// Initialization could not find the required number of distinct seed points.
    #[error("initialization failed: {0}")]
    InitFailure(String),

    /// An IDX file does not start with the expected magic number.
    #[error("bad IDX magic in {path}: expected {expected:#010x}, got {got:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        got: u32,
    },

    /// An IDX file is shorter than its header promises.
    #[error("truncated file {path}: expected {needed} bytes of payload, found {had}")]
    TruncatedFile {
        path: String,
        needed: usize,
        had: usize,
    },

    /// IDX image and label files disagree on the number of records.
    #[error("count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    /// A CSV cell failed to parse. Row and column are 1-based and count the
    /// physical file lines, so a reported location can be opened directly.
    #[error("parse error at row {row}, column {col}: {msg}")]
    ParseError { row: usize, col: usize, msg: String },

    /// A CSV row has a different number of fields than the first data row.
    #[error("ragged rows: row {row} has {got} fields, expected {expected}")]
    RaggedRows {
        row: usize,
        got: usize,
        expected: usize,
    },

    /// PCA was asked for more components than the data's positive spectrum supports.
    #[error("rank deficient: {positive} positive eigenvalues, {requested} requested")]
    RankDeficient { positive: usize, requested: usize },

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Invalid argument combinations not covered by a more specific variant.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
