//! Bayesian model averaging of climate model ensembles with weights from
//! both long-term trends and AR(1) internal variability.
//!
//! The pipeline: [`decompose`] raw output into trend and anomalies, weight
//! models by trend ([`trend_weight`]) and variability ([`var_weight`]),
//! [`combine`] the two, then sample a weighted mixture of projected
//! changes ([`project`]). [`crossval`] wraps this in leave-one-out
//! validation and calibrates the error expansion factor.

pub mod ar1;
pub mod combine;
pub mod crossval;
pub mod dataset;
pub mod decompose;
pub mod diagnostics;
pub mod error;
pub mod presets;
pub mod project;
pub mod report;
pub mod rng;
pub mod series;
pub mod stats;
pub mod synthetic;
pub mod trend_weight;
pub mod var_weight;
pub mod weights;

pub use ar1::{ar1_conditional_loglik, ar1_mle, ar1_simulate, periodogram, Ar1Params, Periodogram};
pub use combine::combine_weights;
pub use crossval::{
    calibrate_f, run_loocv, Calibration, CrossValReport, ExperimentConfig, Method, PreparedEnsemble,
};
pub use dataset::{load_dataset, write_dataset, EnsembleDataset, ModelSeries};
pub use decompose::{decompose, Decomposition, DecompositionMode, SmootherKind, SmootherSpec};
pub use diagnostics::{independence_diagnostic, spectrum_envelope_check};
pub use error::{Error, ErrorKind, Result};
pub use presets::{preset, Preset, PresetName};
pub use project::{
    future_bias_scale, sample_projection, summarize, ProjectionInputs, ProjectionResult,
    ProjectionVariant, Summary,
};
pub use report::{emit_report, ReportFormat, RunManifest};
pub use series::{Period, TimeSeries};
pub use synthetic::{generate_synthetic_ensemble, SyntheticEnsembleSpec};
pub use trend_weight::{trend_weights, EnsembleTrends, TrendPrior};
pub use var_weight::{var_weights, VariabilitySummaries};
pub use weights::WeightVector;
