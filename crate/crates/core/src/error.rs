use thiserror::Error;

#[derive(Debug, Error)]
pub enum PsflowError {
    #[error("parameter domain: {0}")]
    ParameterDomain(String),

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("degenerate initial data: {0}")]
    DegenerateInitial(String),

    #[error("step failure at ds = {ds:e}: {reason}")]
    StepFailure { ds: f64, reason: String },

    #[error("data integrity: {0}")]
    DataIntegrity(String),

    #[error("range: {0}")]
    Range(String),

    #[error("integrator inconsistency: {0}")]
    IntegratorInconsistency(String),

    #[error("run incomplete: {}", .0.reason)]
    Incomplete(Box<crate::store::IncompleteRun>),

    #[error("invariant failure: {0}")]
    InvariantFailure(String),

    #[error("config: {0}")]
    Config(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PsflowError>;
