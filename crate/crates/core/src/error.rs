use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("window overflow: {what} needs cells {needed_lo:?}..{needed_hi:?} but the window spans {window_lo:?}..{window_hi:?}")]
    WindowOverflow {
        what: String,
        needed_lo: Vec<i64>,
        needed_hi: Vec<i64>,
        window_lo: Vec<i64>,
        window_hi: Vec<i64>,
    },

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("factorization failed: pivot {index} is {value:e}")]
    Factorization { index: usize, value: f64 },

    #[error("power iteration did not converge after {iterations} iterations (last relative change {last_change:e}, estimate {estimate:e})")]
    Convergence {
        iterations: usize,
        last_change: f64,
        estimate: f64,
    },

    #[error("degenerate perturbation of {0}: perturbed cube has zero grid measure")]
    DegeneratePerturbation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
