use std::path::PathBuf;

/// Errors raised anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("value {value} outside the admissible domain [-1, 1]")]
    Domain { value: f64 },
    #[error("{path}: bad magic number 0x{found:08x} (expected 0x{expected:08x})")]
    Format {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{path}: {msg}")]
    Length { path: PathBuf, msg: String },
    #[error("{0}")]
    Consistency(String),
    #[error("{path}: label byte {label} at record {record} is not a CIFAR-10 class")]
    Label {
        path: PathBuf,
        record: usize,
        label: u8,
    },
    #[error("requested {requested} patterns but only {available} are available")]
    Capacity { requested: usize, available: usize },
    #[error("non-finite loss term `{term}` at epoch {epoch}, batch {batch}")]
    NonFinite {
        term: &'static str,
        epoch: usize,
        batch: usize,
    },
    #[error("capacity sweep at {count} patterns: {source}")]
    Sweep {
        count: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint checksum mismatch: stored 0x{stored:08x}, computed 0x{computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
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
