//! Error type shared across the crate.
//!
//! Variants are grouped by how a batch front end should react: validation
//! and parse problems point at the offending row/region/line, numerical
//! failures name the stage that broke.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a documented precondition. The message names the
    /// offending row, region id, or argument.
    #[error("invalid input: {0}")]
    Validation(String),

    /// A weight or dataset file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A numerical procedure failed (singularity, non-convergence,
    /// degenerate fit). `stage` names the computation.
    #[error("numerical failure in {stage}: {message}")]
    Numerical { stage: String, message: String },

    /// Error raised by a pipeline stage, labelled with the stage name.
    #[error("pipeline stage '{stage}': {source}")]
    Pipeline {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    pub fn numerical(stage: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Numerical {
            stage: stage.into(),
            message: msg.into(),
        }
    }

    pub fn at_stage(self, stage: impl Into<String>) -> Self {
        Error::Pipeline {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input rather than numerical trouble.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Validation(_) | Error::Parse { .. } | Error::Io(_) => true,
            Error::Numerical { .. } => false,
            Error::Pipeline { source, .. } => source.is_input_error(),
        }
    }
}
