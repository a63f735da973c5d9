use std::path::PathBuf;

/// Broad error classes, used by frontends to pick an exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad arguments or parameters supplied by the caller.
    Input,
    /// Reading, writing or parsing external files.
    Io,
    /// A numerical stage could not produce a result.
    Numerical,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("degenerate laplacian: trace {trace:e} is not positive")]
    DegenerateLaplacian { trace: f64 },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("unsupported size: {views} views exceeds the exact solver limit of {max}")]
    UnsupportedSize { views: usize, max: usize },

    #[error("internal invariant violated: {0}")]
    InternalInvariant(String),

    #[error("cluster separation {separation} infeasible after {attempts} attempts")]
    SeparationInfeasible { separation: f64, attempts: usize },

    #[error("{0} is undefined")]
    Undefined(&'static str),

    #[error("views are not synchronized: {path} has {found} frames, expected {expected}")]
    Synchronization {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidInput(_)
            | Error::InvalidParameter(_)
            | Error::Dimension(_)
            | Error::UnsupportedSize { .. }
            | Error::Undefined(_) => ErrorClass::Input,
            Error::Synchronization { .. }
            | Error::Parse { .. }
            | Error::Format { .. }
            | Error::Io { .. } => ErrorClass::Io,
            Error::DegenerateData(_)
            | Error::InvalidKernel(_)
            | Error::DegenerateLaplacian { .. }
            | Error::ContractViolation(_)
            | Error::InternalInvariant(_)
            | Error::SeparationInfeasible { .. } => ErrorClass::Numerical,
            Error::Stage { source, .. } => source.class(),
        }
    }

    /// Name of the pipeline stage that failed, if the error was tagged with one.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str) -> Error {
        match self {
            tagged @ Error::Stage { .. } => tagged,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
