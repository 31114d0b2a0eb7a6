use thiserror::Error;

use crate::model::ExperimentId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite ({context})")]
    NotPositiveDefinite { context: String },

    #[error("matrix is not symmetric: max asymmetry {asymmetry:e} exceeds {tolerance:e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("experiment id {0} is not in the pool")]
    UnknownExperimentId(ExperimentId),

    #[error("experiment id {0} appears more than once in the pool")]
    DuplicateExperimentId(ExperimentId),

    #[error("the experiment pool is empty")]
    EmptyPool,

    #[error("missing observation for experiment {id} (slot {slot})")]
    MissingObservation { id: ExperimentId, slot: usize },

    #[error("cannot select {requested} experiments without replacement from a pool of {available}")]
    PoolExhausted { requested: usize, available: usize },

    #[error("target map is rank deficient (sigma_min/sigma_max = {ratio:e}); the alpha bound degenerates to 0")]
    RankDeficientTarget { ratio: f64 },

    #[error("invalid alpha({a}, {b}) = {value}")]
    InvalidAlpha { a: usize, b: usize, value: f64 },

    #[error("certificate factor {factor} is not below 1; equivalent constant is undefined")]
    DegenerateFactor { factor: f64 },

    #[error("enumeration of {count} items exceeds the limit of {limit}")]
    TooLarge { count: u128, limit: u128 },

    #[error("every (A, B, u) triple had a degenerate denominator ({skipped} skipped)")]
    AllDegenerate { skipped: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no training ratings: {0}")]
    EmptyTraining(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn not_pd(context: impl Into<String>) -> Self {
        Error::NotPositiveDefinite { context: context.into() }
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
