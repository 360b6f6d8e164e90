//! Dataset fitting and Monte Carlo studies behind the `sabre` binary.

mod config;
mod designs;
mod fit;
mod knots;
mod mc;

use thiserror::Error;

use crate::inference::InferenceError;
use crate::sabre::SabreError;
use crate::smle::FitError;
use crate::spline::SplineError;

pub use config::{
    Covariates, CustomDesign, DesignKind, ExperimentConfig, FitConfig, MeanFunction, SabreSettings,
    CONFIG_VERSION,
};
pub use designs::{DesignSpec, Grid, ReplicationData};
pub use fit::{fit_reader, run_fit, CoefficientReport, CurveReport, EstimatorReport, FitReport};
pub use knots::{knot_count, Exponent};
pub use mc::{
    run_mc, simulate, summarize, summary_path, write_records, Estimator, FailureCount, McOutput,
    McSummary, ReplicationRecord, SummaryCell,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("design matrix is rank deficient in columns: {}", .columns.join(", "))]
    SingularDesign { columns: Vec<String> },
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Sabre(#[from] SabreError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// 1 for configuration and input problems, 2 for estimation failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_)
            | HarnessError::Parse { .. }
            | HarnessError::Io(_)
            | HarnessError::Csv(_)
            | HarnessError::Json(_) => 1,
            _ => 2,
        }
    }
}
