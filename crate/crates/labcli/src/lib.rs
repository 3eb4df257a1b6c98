//! Desk-scale experiments on perturbed Haar systems: parameter sweeps,
//! slope fits and report files, driven by JSON configs.

pub mod config;
pub mod experiments;
pub mod generators;
pub mod mollified;
pub mod nbv;
pub mod report;
pub mod sweep;

pub use generators::Generator;
pub use sweep::{Scenario, SlopeFit, SweepPoint, SweepReport};

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Core(#[from] haarstab::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("every measurement is below {threshold:e} (underflow)")]
    Underflow { threshold: f64 },
    #[error("slope fit: {0}")]
    Fit(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
