use thiserror::Error;

use crate::scenario::Violation;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DualityError {
    /// A function is outside the declared domain of a generator.
    #[error("domain error: {0}")]
    Domain(String),

    /// An expression could not be evaluated at a point.
    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("flow left its state space at t = {time}: {detail}")]
    Blowup { time: f64, detail: String },

    #[error("jump cap of {cap} exceeded before t = {time} (non-conservative rates?)")]
    Explosion { cap: usize, time: f64 },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("scenario failed validation: {}", summarize(.0))]
    Validation(Vec<Violation>),

    /// The requested operation does not apply to this scenario or process kind.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(String),
}

fn summarize(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.code.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

impl From<std::io::Error> for DualityError {
    fn from(err: std::io::Error) -> Self {
        DualityError::Io(err.to_string())
    }
}

pub type Result<T, E = DualityError> = std::result::Result<T, E>;
