//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by any component of the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// I/O failure, annotated with the path that was being accessed.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A jsonlines record could not be parsed. Carries the 1-based line number.
    #[error("malformed record at line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    /// A record parsed as JSON but violates the dataset schema.
    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },

    /// Invalid argument or violated construction invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Numerical failure (non-finite likelihood, singular system, ...).
    #[error("numerical error{}: {message}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    Numerics { step: Option<usize>, message: String },

    /// Configuration text could not be parsed or refers to an unknown component.
    #[error("config error: {0}")]
    Config(String),

    /// Error propagated from a named pipeline stage.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numerics(step: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Numerics { step, message: msg.into() }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Wrap an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
