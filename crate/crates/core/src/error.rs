use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input: malformed expressions, scenario files, or arguments.
    Usage,
    Io,
    /// Singular matrices, domain errors and other numerical breakdowns.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("invalid symbol table: {0}")]
    Symbol(String),

    #[error("domain error at offset {offset}: {message}")]
    Domain { offset: usize, message: String },

    #[error("variable slot {slot} is not bound")]
    UnboundVariable { slot: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("regularity failure: {0}")]
    Regularity(String),

    #[error("singular frame (condition number {cond:.3e})")]
    SingularFrame { cond: f64 },

    #[error("state is not on the constraint submanifold (max |v^a| = {residual:.3e})")]
    OffConstraint { residual: f64 },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("scenario error at `{pointer}`: {message}")]
    Scenario { pointer: String, message: String },

    #[error("constraint basis has rank {rank}, expected {expected}, at q = {point:?}")]
    Rank {
        rank: usize,
        expected: usize,
        point: Vec<f64>,
    },

    #[error("integration failed at t = {t}: {source}")]
    Integration { t: f64, source: Box<Error> },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Syntax { .. }
            | Error::UnknownIdentifier { .. }
            | Error::Symbol(_)
            | Error::Precondition(_)
            | Error::Unsupported(_)
            | Error::Scenario { .. } => ErrorClass::Usage,
            Error::Io { .. } => ErrorClass::Io,
            Error::Domain { .. }
            | Error::UnboundVariable { .. }
            | Error::Regularity(_)
            | Error::SingularFrame { .. }
            | Error::OffConstraint { .. }
            | Error::Rank { .. } => ErrorClass::Numeric,
            Error::Integration { source, .. } => source.class(),
        }
    }
}
