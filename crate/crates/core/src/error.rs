use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse grouping of failures, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// A caller-supplied parameter is out of its domain.
    Parameter,
    /// Input data could not be read or violates the dataset invariants.
    Data,
    /// An algorithm failed numerically.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}, column {column}: cannot parse {value:?} as a finite number")]
    BadCell { row: usize, column: usize, value: String },

    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow { row: usize, expected: usize, found: usize },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("k = {k} is out of range 1..={n}")]
    KOutOfRange { k: usize, n: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("within-cluster dispersion is zero at k = {k}; its logarithm is undefined")]
    ZeroDispersion { k: usize },

    #[error("k-grid mismatch: observed {observed:?}, reference {reference:?}")]
    GridMismatch {
        observed: Vec<usize>,
        reference: Vec<usize>,
    },

    #[error("fit failed at k = {k}: {source}")]
    Fit {
        k: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("reference dataset {index} failed: {source}")]
    Reference {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{failed} of {total} replicates failed (first: {first})")]
    TooManyFailures { failed: usize, total: usize, first: String },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. }
            | Error::Csv(_)
            | Error::BadCell { .. }
            | Error::RaggedRow { .. }
            | Error::InvalidData(_) => ErrorKind::Data,
            Error::InvalidParameter(_) | Error::KOutOfRange { .. } | Error::GridMismatch { .. } => ErrorKind::Parameter,
            Error::Numerical(_) | Error::ZeroDispersion { .. } | Error::TooManyFailures { .. } => ErrorKind::Numerical,
            Error::Fit { source, .. } | Error::Reference { source, .. } => source.kind(),
        }
    }

    pub(crate) fn at_k(self, k: usize) -> Error {
        Error::Fit {
            k,
            source: Box::new(self),
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
