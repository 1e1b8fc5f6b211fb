use thiserror::Error;

/// Errors produced anywhere in the theory, synthesis and analysis pipeline.
///
/// The variants are grouped by what went wrong so that callers (the CLI in
/// particular) can map them onto distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("invalid angular momentum: {0}")]
    AngularMomentum(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("stationary state is not unique: nullspace dimension {dim}")]
    DegenerateSteadyState { dim: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("time grid mismatch between curves")]
    GridMismatch,

    #[error("detection budget exceeded: gamma1 + gamma2 = {requested:.6e} s^-1 but the detected transition only radiates {available:.6e} s^-1")]
    DetectionBudget { requested: f64, available: f64 },

    #[error("tag stream error: {0}")]
    Stream(String),

    #[error("statistics error: {0}")]
    Statistics(String),

    #[error("phase calibration failed: {0}")]
    Calibration(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field: field.to_string(),
        reason: reason.into(),
    }
}
