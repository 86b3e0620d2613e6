use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("point {point:?} is not strictly inside the domain of radius {radius}")]
    OutsideDomain { point: [f64; 3], radius: f64 },

    #[error("source and probe coincide at {0:?}; use the self-interaction term")]
    Coincident([f64; 3]),

    #[error("matrix {what} is singular or ill-conditioned (condition estimate {cond:e})")]
    Singular { what: &'static str, cond: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("grid: {0}")]
    Grid(String),

    #[error("explicit exchange unstable: dt * rate = {product:.3} exceeds {limit}; try dt <= {suggested_dt:e}")]
    UnstableStep {
        product: f64,
        limit: f64,
        suggested_dt: f64,
    },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("analysis: {0}")]
    Analysis(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
