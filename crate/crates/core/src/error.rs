use thiserror::Error;

use crate::propensity::LogisticModel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: `{field}` {reason}")]
    Config { field: &'static str, reason: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("duplicate id `{id}` (rows {first} and {second})")]
    DuplicateId {
        id: String,
        first: usize,
        second: usize,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Domain(String),

    #[error("treatment `{treatment}` has no {group} units")]
    DegenerateGroup {
        treatment: String,
        group: &'static str,
    },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("covariate `{0}` has zero pooled variance")]
    DegenerateCovariate(String),

    #[error("logistic fit did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
        last: Box<LogisticModel>,
    },

    #[error(
        "separation detected: coefficient for `{covariate}` exceeded {cap} on the standardized scale; \
         refit with ridge > 0 (e.g. {suggested_ridge})"
    )]
    Separation {
        covariate: String,
        cap: f64,
        suggested_ridge: f64,
    },

    #[error("positivity violated: propensity at 0 or 1 for rows {rows:?}")]
    Positivity { rows: Vec<usize> },

    #[error("design matrix is rank deficient; dependent columns: {}", .columns.join(", "))]
    Collinear { columns: Vec<String> },

    #[error("unstable estimate: {failed} of {total} bootstrap resamples failed")]
    UnstableEstimate { failed: usize, total: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("training diverged at epoch {epoch}")]
    Diverged {
        epoch: usize,
        last_finite: Box<crate::fairrank::RankerModel>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
