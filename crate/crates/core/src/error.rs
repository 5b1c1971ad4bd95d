use thiserror::Error;

use crate::data::Role;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("schema violation at row {row}: {msg}")]
    SchemaViolation { row: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("role `{role}` is not available: {context}")]
    RoleUnavailable { role: Role, context: String },

    #[error("singular system: {0}; use a positive ridge or enable the min-norm fallback")]
    Singular(String),

    #[error("under-identified system: {n_instruments} instruments < {n_params} parameters")]
    UnderIdentified { n_instruments: usize, n_params: usize },

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("degenerate treatment: {0}")]
    DegenerateTreatment(String),

    #[error("degenerate instrument: {0}")]
    DegenerateInstrument(String),

    #[error("fold {fold}, {stage}: {source}")]
    Fold {
        fold: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{failed} of {replications} replications failed (at most {allowed} allowed); first failure: {first}")]
    TooManyFailures {
        failed: usize,
        replications: usize,
        allowed: usize,
        first: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_fold(self, fold: usize, stage: &'static str) -> Self {
        Error::Fold {
            fold,
            stage,
            source: Box::new(self),
        }
    }

    /// True for input/configuration problems, false for numerical failures.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::SchemaViolation { .. }
            | Error::Validation(_)
            | Error::RoleUnavailable { .. }
            | Error::Io(_)
            | Error::Csv(_) => true,
            Error::Fold { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    /// Fold index when the failure happened inside a cross-fitting fold.
    pub fn fold(&self) -> Option<usize> {
        match self {
            Error::Fold { fold, .. } => Some(*fold),
            _ => None,
        }
    }
}
