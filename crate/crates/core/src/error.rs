use thiserror::Error;

/// Errors raised anywhere in the selection pipeline.
#[derive(Debug, Error)]
pub enum GemsError {
    #[error("ingestion error: {0}")]
    Ingest(String),

    #[error("row {row} has no observed entries")]
    EmptyRow { row: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("descent violation: Q(candidate) = {q_next:.9} exceeds Q(current) = {q_current:.9}")]
    DescentViolation { q_current: f64, q_next: f64 },

    #[error("observed GIC increased from {previous:.9} to {current:.9} at iteration {iteration}")]
    GicIncrease {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("maximum likelihood estimate does not exist for {what} (case {case})")]
    MleNonexistence { what: String, case: &'static str },

    #[error("estimator error: {0}")]
    Estimator(String),

    #[error("impossible evidence: {0}")]
    ImpossibleEvidence(String),

    #[error("sampling failure at row {row}: {accepted} accepted out of {proposals} proposals")]
    SamplingFailure {
        row: usize,
        accepted: usize,
        proposals: usize,
    },

    #[error("forest infeasible: {0}")]
    ForestInfeasible(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GemsError>;
