//! Error type shared by every module.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty input sequence")]
    EmptyInput,

    #[error("sequence needs position {needed} but the position table has {available} rows")]
    PositionOverflow { needed: usize, available: usize },

    #[error("perturbation space exceeds enumeration cap ({cap})")]
    SpaceTooLarge { cap: usize },

    /// An empty interval meet beyond the drift tolerance. Signals an
    /// implementation bug in an abstract transformer; never swallowed.
    #[error("soundness violation: empty interval meet ([{a_lo}, {a_hi}] ∩ [{b_lo}, {b_hi}])")]
    EmptyMeet {
        a_lo: f64,
        a_hi: f64,
        b_lo: f64,
        b_hi: f64,
    },

    #[error("space spec syntax error at byte {pos}: {msg}")]
    SpaceSyntax { pos: usize, msg: String },

    #[error("unknown transformation name: {0}")]
    UnknownTransformation(String),

    #[error("empty resource table: {0}")]
    EmptyResource(String),

    #[error("bad resource file {path}, line {line}: {msg}")]
    BadResource {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("malformed dataset line {line}: {msg}")]
    MalformedLine { line: usize, msg: String },

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },

    #[error("model file version mismatch: found {0:?}")]
    VersionMismatch(String),

    #[error("malformed model file: {0}")]
    MalformedFile(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged: non-finite loss at step {0}")]
    Diverged(usize),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
