use thiserror::Error;

/// Errors produced by model construction, estimation, and operator routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("parameter out of range: {0}")]
    Parameter(String),

    #[error("observable evaluation failed at step {step}: {detail}")]
    Evaluation { step: usize, detail: String },

    #[error("model specification invalid: {0}")]
    Spec(String),

    #[error("hypothesis failure: {0}")]
    HypothesisFailure(String),

    #[error("numerical inconsistency: {0}")]
    NumericalInconsistency(String),

    #[error("power iteration did not converge: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },

    #[error("ambiguous dominant eigenvalue: |{lambda1}| vs |{lambda2}|")]
    AmbiguousDominance {
        lambda1: num_complex::Complex64,
        lambda2: num_complex::Complex64,
    },

    #[error("infinite Hilbert distance: point touches the simplex boundary")]
    BoundaryPoint,

    #[error("degenerate matrix: image norm is zero")]
    DegenerateMatrix,

    #[error("unsupported model for this route: {0}")]
    Unsupported(String),

    #[error("missing dependency: {0}")]
    MissingDependency(String),

    #[error("series does not decay: fitted log-slope {slope:.4} >= 0")]
    NonDecayingSeries { slope: f64 },

    #[error("finite-difference step failure: {0}")]
    StepSize(String),

    #[error("config error at {path}: {detail}")]
    Config { path: String, detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
