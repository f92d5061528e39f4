//! Leave-one-out cross-validation with each ensemble member as
//! pseudo-truth, and calibration of the error expansion factor `f`.

use serde::{Deserialize, Serialize};

use crate::ar1::ar1_mle;
use crate::dataset::EnsembleDataset;
use crate::decompose::{decompose, fit_trend, DecompositionMode, SmootherSpec};
use crate::error::{Error, Result};
use crate::project::{
    future_bias_scale_with, sample_projection, ModelFuture, ProjectionInputs, ProjectionVariant,
    DEFAULT_PROJECTION_DRAWS,
};
use crate::rng::{derive_seed, tag};
use crate::series::{Period, TimeSeries};
use crate::stats;
use crate::trend_weight::{
    build_discrepancy_pool, trend_log_marginals, DiscrepancyPool, DistanceMetric, EnsembleTrends,
    TrendPrior,
};
use crate::var_weight::{
    build_var_error_pool, next_closest_var, summarize_variability, var_log_marginals, ClippingRule,
    VarErrorPool, VariabilitySummaries,
};
use crate::weights::WeightVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Trend,
    #[default]
    TrendVar,
}

/// What the future bias scale is computed from: each model's future trend
/// or its raw future output, both taken relative to the model's
/// projection reference mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasBasis {
    #[default]
    Trend,
    Raw,
}

pub const DEFAULT_TREND_MC: usize = 100_000;
pub const DEFAULT_VAR_MC: usize = 10_000;
pub const DEFAULT_SEED: u64 = 20_190_415;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Periods default to the dataset's own when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration_period: Option<Period>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projection_reference_period: Option<Period>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projection_period: Option<Period>,
    /// Smoother for calibration-period decomposition.
    pub smoother: SmootherSpec,
    /// Smoother for projection-period decomposition.
    pub projection_smoother: SmootherSpec,
    /// Applies to calibration anomalies used for variability weighting.
    pub mode: DecompositionMode,
    pub variant: ProjectionVariant,
    pub method: Method,
    pub f: f64,
    pub trend_mc: usize,
    pub var_mc: usize,
    pub proj_draws: usize,
    pub seed: u64,
    /// Express calibration output as departures from each series' own
    /// calibration mean before trend weighting.
    pub center_calibration: bool,
    pub bias_basis: BiasBasis,
    /// Use the dataset's observations as the single truth, with all k
    /// models in the mixture.
    pub observational: bool,
    pub trend_prior: TrendPrior,
    pub clipping: ClippingRule,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            calibration_period: None,
            projection_reference_period: None,
            projection_period: None,
            smoother: SmootherSpec::theil_sen(),
            projection_smoother: SmootherSpec::theil_sen(),
            mode: DecompositionMode::Absolute,
            variant: ProjectionVariant::Boot,
            method: Method::TrendVar,
            f: 1.0,
            trend_mc: DEFAULT_TREND_MC,
            var_mc: DEFAULT_VAR_MC,
            proj_draws: DEFAULT_PROJECTION_DRAWS,
            seed: DEFAULT_SEED,
            center_calibration: true,
            bias_basis: BiasBasis::Trend,
            observational: false,
            trend_prior: TrendPrior::default(),
            clipping: ClippingRule::default(),
        }
    }
}

/// Periods after falling back to the dataset's.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolvedPeriods {
    pub calibration: Period,
    pub reference: Period,
    pub projection: Period,
}

impl ExperimentConfig {
    pub fn periods(&self, dataset: &EnsembleDataset) -> ResolvedPeriods {
        ResolvedPeriods {
            calibration: self.calibration_period.unwrap_or(dataset.calibration),
            reference: self
                .projection_reference_period
                .unwrap_or(dataset.projection_reference),
            projection: self.projection_period.unwrap_or(dataset.projection),
        }
    }

    /// Checks the settings that do not depend on data.
    pub fn validate(&self) -> Result<()> {
        self.smoother.validate()?;
        self.projection_smoother.validate()?;
        if !(self.f >= 0.0 && self.f.is_finite()) {
            return Err(Error::InvalidConfig(format!("error expansion factor {} must be >= 0", self.f)));
        }
        for (name, n) in [
            ("trend_mc", self.trend_mc),
            ("var_mc", self.var_mc),
            ("proj_draws", self.proj_draws),
        ] {
            if n == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.clipping.rho_cap > 0.0 && self.clipping.rho_cap < 1.0) {
            return Err(Error::InvalidConfig("rho cap must lie in (0, 1)".into()));
        }
        if !(self.clipping.sigma_floor_factor > 0.0) {
            return Err(Error::InvalidConfig("sigma floor factor must be positive".into()));
        }
        for p in [
            &self.calibration_period,
            &self.projection_reference_period,
            &self.projection_period,
        ]
        .into_iter()
        .flatten()
        {
            p.validate("configured")?;
        }
        Ok(())
    }
}

/// Decomposed calibration output of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationParts {
    /// Trend, centred when configured.
    pub trend: Vec<f64>,
    /// Anomalies in the configured mode.
    pub anomalies: Vec<f64>,
    /// `trend + absolute anomalies`, i.e. the (centred) raw series.
    pub raw: Vec<f64>,
}

/// Everything about an ensemble that does not depend on `f` or on which
/// model plays truth.
#[derive(Debug, Clone)]
pub struct PreparedEnsemble {
    pub model_ids: Vec<String>,
    pub calibration: Vec<CalibrationParts>,
    pub trends: EnsembleTrends,
    pub trend_pool: DiscrepancyPool,
    pub var_summaries: VariabilitySummaries,
    pub var_pool: VarErrorPool,
    pub futures: Vec<ModelFuture>,
    /// Per-model vectors the bias scale is computed from.
    pub bias_vectors: Vec<Vec<f64>>,
    /// `mean(projection output) - reference mean` per model.
    pub true_deltas: Vec<f64>,
    pub observations: Option<PreparedObservations>,
}

#[derive(Debug, Clone)]
pub struct PreparedObservations {
    pub calibration: CalibrationParts,
    /// Observed change when the observations cover both the reference and
    /// the projection period.
    pub true_delta: Option<f64>,
}

fn prepare_calibration(
    series: &TimeSeries,
    config: &ExperimentConfig,
) -> Result<CalibrationParts> {
    let d = decompose(series, &config.smoother, config.mode)?;
    let shift = if config.center_calibration { series.mean() } else { 0.0 };
    let abs = d.absolute_anomalies();
    let trend: Vec<f64> = d.trend.iter().map(|t| t - shift).collect();
    let raw = trend.iter().zip(&abs).map(|(t, a)| t + a).collect();
    Ok(CalibrationParts {
        trend,
        anomalies: d.anomalies,
        raw,
    })
}

impl PreparedEnsemble {
    pub fn new(dataset: &EnsembleDataset, config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        dataset.validate()?;
        let periods = config.periods(dataset);
        if !config.observational && periods.calibration.overlaps(&periods.projection) {
            return Err(Error::InvalidConfig(
                "projection period overlaps the calibration period".into(),
            ));
        }
        if config.observational && dataset.observations.is_none() {
            return Err(Error::InvalidConfig(
                "observational run requires an observations file".into(),
            ));
        }
        let mut ref_dataset = dataset.clone();
        ref_dataset.projection_reference = periods.reference;

        let mut calibration = Vec::with_capacity(dataset.k());
        let mut futures = Vec::with_capacity(dataset.k());
        let mut bias_vectors = Vec::with_capacity(dataset.k());
        let mut true_deltas = Vec::with_capacity(dataset.k());
        for m in &dataset.models {
            let with_ctx = |e: Error| e.for_model(m.id.clone());
            let cal = m.calibration.slice(&periods.calibration).map_err(with_ctx)?;
            calibration.push(prepare_calibration(&cal, config).map_err(with_ctx)?);

            let proj = m.projection.slice(&periods.projection).map_err(with_ctx)?;
            let reference_mean = ref_dataset
                .reference_mean(&m.calibration, &m.projection)
                .map_err(with_ctx)?;
            let trend = fit_trend(&proj, &config.projection_smoother).map_err(with_ctx)?;
            let anomalies: Vec<f64> = proj.values().iter().zip(&trend).map(|(v, t)| v - t).collect();
            let ar1 = match config.variant {
                ProjectionVariant::Ar1 => Some(ar1_mle(&anomalies).map_err(with_ctx)?),
                ProjectionVariant::Boot => None,
            };
            bias_vectors.push(match config.bias_basis {
                BiasBasis::Trend => trend.iter().map(|t| t - reference_mean).collect(),
                BiasBasis::Raw => proj.values().iter().map(|v| v - reference_mean).collect(),
            });
            true_deltas.push(proj.mean() - reference_mean);
            futures.push(ModelFuture {
                id: m.id.clone(),
                trend,
                anomalies,
                reference_mean,
                ar1,
            });
        }

        let model_ids = dataset.model_ids();
        let trends = EnsembleTrends::new(
            model_ids.clone(),
            calibration.iter().map(|c| c.trend.clone()).collect(),
        )?;
        let trend_pool = build_discrepancy_pool(&trends)?;
        let anomalies: Vec<Vec<f64>> = calibration.iter().map(|c| c.anomalies.clone()).collect();
        let var_summaries = summarize_variability(&model_ids, &anomalies)?;
        let assignments = next_closest_var(&var_summaries, &anomalies)?;
        let var_pool = build_var_error_pool(&var_summaries, &assignments)?;

        let observations = match (&dataset.observations, config.observational) {
            (Some(obs), true) => {
                let ctx = |e: Error| e.for_model("observations");
                let cal = obs.slice(&periods.calibration).map_err(ctx)?;
                let true_delta = match (obs.slice(&periods.reference), obs.slice(&periods.projection)) {
                    (Ok(r), Ok(p)) => Some(p.mean() - r.mean()),
                    _ => None,
                };
                Some(PreparedObservations {
                    calibration: prepare_calibration(&cal, config).map_err(ctx)?,
                    true_delta,
                })
            }
            _ => None,
        };

        Ok(Self {
            model_ids,
            calibration,
            trends,
            trend_pool,
            var_summaries,
            var_pool,
            futures,
            bias_vectors,
            true_deltas,
            observations,
        })
    }

    pub fn k(&self) -> usize {
        self.model_ids.len()
    }

    /// Unnormalized log trend weights (prior + marginal) of all models for
    /// the given observed calibration output.
    pub fn trend_log_weights(
        &self,
        observed: &CalibrationParts,
        config: &ExperimentConfig,
        f: f64,
        seed: u64,
    ) -> Result<Vec<f64>> {
        let marginals = trend_log_marginals(
            &self.trends,
            &observed.raw,
            &self.trend_pool,
            f,
            &config.trend_prior,
            config.trend_mc,
            seed,
        )?;
        let priors = config.trend_prior.log_model_priors(self.k());
        Ok(priors.iter().zip(&marginals).map(|(p, m)| p + m).collect())
    }

    pub fn var_log_weights(
        &self,
        observed: &CalibrationParts,
        config: &ExperimentConfig,
        f: f64,
        seed: u64,
    ) -> Result<Vec<f64>> {
        var_log_marginals(
            &self.var_summaries,
            &self.var_pool,
            &observed.anomalies,
            f,
            &config.clipping,
            config.var_mc,
            seed,
        )
    }

    /// Log weights of the configured method (trend, or trend + variability).
    pub fn method_log_weights(
        &self,
        observed: &CalibrationParts,
        config: &ExperimentConfig,
        f: f64,
        seed: u64,
    ) -> Result<Vec<f64>> {
        let mut log_w = self.trend_log_weights(observed, config, f, seed)?;
        if config.method == Method::TrendVar {
            let v = self.var_log_weights(observed, config, f, seed)?;
            for (w, v) in log_w.iter_mut().zip(v) {
                *w += v;
            }
        }
        Ok(log_w)
    }

    /// Bias scale over the models in `members`.
    pub fn bias_scale(&self, members: &[usize]) -> Result<f64> {
        let vectors: Vec<Vec<f64>> = members.iter().map(|&i| self.bias_vectors[i].clone()).collect();
        let means: Vec<f64> = vectors.iter().map(|v| stats::mean(v)).collect();
        future_bias_scale_with(&vectors, &means, DistanceMetric::L1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub truth_id: String,
    pub true_delta: Option<f64>,
    pub ci90: (f64, f64),
    pub mean: f64,
    pub median: f64,
    pub mode: f64,
    pub inside: Option<bool>,
    /// Mixture weights over all k models (zero for the held-out truth).
    pub weights: Vec<f64>,
    pub bias_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub model_ids: Vec<String>,
    pub method: Method,
    pub variant: ProjectionVariant,
    pub f: f64,
    pub seed: u64,
    pub records: Vec<TruthRecord>,
    pub coverage: f64,
    pub mciw: f64,
    pub mab: f64,
}

impl CrossValReport {
    fn aggregate(
        prepared: &PreparedEnsemble,
        config: &ExperimentConfig,
        f: f64,
        records: Vec<TruthRecord>,
    ) -> Self {
        let scored: Vec<&TruthRecord> = records.iter().filter(|r| r.true_delta.is_some()).collect();
        let n = scored.len().max(1) as f64;
        let coverage = scored.iter().filter(|r| r.inside == Some(true)).count() as f64 / n;
        let mab = scored
            .iter()
            .map(|r| (r.mean - r.true_delta.unwrap()).abs())
            .sum::<f64>()
            / n;
        let mciw = records.iter().map(|r| r.ci90.1 - r.ci90.0).sum::<f64>() / records.len().max(1) as f64;
        Self {
            model_ids: prepared.model_ids.clone(),
            method: config.method,
            variant: config.variant,
            f,
            seed: config.seed,
            records,
            coverage,
            mciw,
            mab,
        }
    }
}

fn truth_seed(config: &ExperimentConfig, truth: usize) -> u64 {
    derive_seed(config.seed, &[tag::TRUTH_ROUND, truth as u64])
}

fn project_round(
    prepared: &PreparedEnsemble,
    config: &ExperimentConfig,
    f: f64,
    weights: WeightVector,
    members: &[usize],
    seed: u64,
) -> Result<(crate::project::ProjectionResult, f64)> {
    let bias_scale = prepared.bias_scale(members)?;
    let inputs = ProjectionInputs {
        models: prepared.futures.clone(),
        weights,
        bias_scale,
        f,
        variant: config.variant,
        n_draws: config.proj_draws,
    };
    Ok((sample_projection(&inputs, seed)?, bias_scale))
}

/// One held-out round: weights over all k, truth excluded and the rest
/// renormalized, projection from the remaining k - 1 models.
pub fn run_truth_round(
    prepared: &PreparedEnsemble,
    config: &ExperimentConfig,
    f: f64,
    truth: usize,
) -> Result<TruthRecord> {
    let k = prepared.k();
    let seed = truth_seed(config, truth);
    let observed = &prepared.calibration[truth];
    let mut log_w = prepared.method_log_weights(observed, config, f, seed)?;
    log_w[truth] = f64::NEG_INFINITY;
    let weights = WeightVector::from_log(&log_w)?;
    let members: Vec<usize> = (0..k).filter(|&j| j != truth).collect();
    let (result, bias_scale) = project_round(prepared, config, f, weights.clone(), &members, seed)?;
    let s = result.summary;
    let true_delta = prepared.true_deltas[truth];
    Ok(TruthRecord {
        truth_id: prepared.model_ids[truth].clone(),
        true_delta: Some(true_delta),
        ci90: s.ci90,
        mean: s.mean,
        median: s.median,
        mode: s.mode,
        inside: Some(s.covers(true_delta)),
        weights: weights.into_inner(),
        bias_scale,
    })
}

fn observational_round(
    prepared: &PreparedEnsemble,
    obs: &PreparedObservations,
    config: &ExperimentConfig,
    f: f64,
) -> Result<TruthRecord> {
    let seed = derive_seed(config.seed, &[tag::OBSERVATION]);
    let log_w = prepared.method_log_weights(&obs.calibration, config, f, seed)?;
    let weights = WeightVector::from_log(&log_w)?;
    let members: Vec<usize> = (0..prepared.k()).collect();
    let (result, bias_scale) = project_round(prepared, config, f, weights.clone(), &members, seed)?;
    let s = result.summary;
    Ok(TruthRecord {
        truth_id: "observations".into(),
        true_delta: obs.true_delta,
        ci90: s.ci90,
        mean: s.mean,
        median: s.median,
        mode: s.mode,
        inside: obs.true_delta.map(|d| s.covers(d)),
        weights: weights.into_inner(),
        bias_scale,
    })
}

/// Cross-validation at the given `f`, reusing a prepared ensemble.
pub fn run_loocv_prepared(
    prepared: &PreparedEnsemble,
    config: &ExperimentConfig,
    f: f64,
) -> Result<CrossValReport> {
    if let Some(obs) = &prepared.observations {
        let record = observational_round(prepared, obs, config, f)?;
        return Ok(CrossValReport::aggregate(prepared, config, f, vec![record]));
    }
    let k = prepared.k();
    if k < 3 {
        return Err(Error::InsufficientEnsemble { needed: 3, got: k });
    }
    let records = (0..k)
        .map(|i| {
            run_truth_round(prepared, config, f, i)
                .map_err(|e| e.for_model(format!("truth {}", prepared.model_ids[i])))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CrossValReport::aggregate(prepared, config, f, records))
}

pub fn run_loocv(dataset: &EnsembleDataset, config: &ExperimentConfig) -> Result<CrossValReport> {
    let prepared = PreparedEnsemble::new(dataset, config)?;
    run_loocv_prepared(&prepared, config, config.f)
}

/// Default f grid: 0.25, 0.5, ..., 5.0.
pub fn default_f_grid() -> Vec<f64> {
    (1..=20).map(|i| 0.25 * i as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStep {
    pub f: f64,
    pub coverage: f64,
    pub mciw: f64,
    pub mab: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub target: f64,
    pub granularity: f64,
    pub f_star: Option<f64>,
    pub trace: Vec<CalibrationStep>,
    /// Report at `f_star`.
    pub report: Option<CrossValReport>,
    /// Set when no grid point reaches `target - granularity`.
    pub failure: Option<String>,
}

/// Picks the grid index per the coverage rule: the largest coverage not
/// above `target + granularity` if that is within `granularity` below the
/// target, otherwise the first coverage reaching `target - granularity`.
pub fn select_f(coverages: &[f64], target: f64, granularity: f64) -> Option<usize> {
    // Coverages are multiples of 1/k; tolerance absorbs their rounding.
    let tol = 1e-9;
    let best = coverages
        .iter()
        .copied()
        .filter(|c| *c <= target + granularity + tol)
        .fold(f64::NEG_INFINITY, f64::max);
    let floor = target - granularity - tol;
    let threshold = if best >= floor { best - tol } else { floor };
    coverages.iter().position(|c| *c >= threshold)
}

pub fn calibrate_f(
    dataset: &EnsembleDataset,
    config: &ExperimentConfig,
    target: f64,
    f_grid: &[f64],
) -> Result<Calibration> {
    let prepared = PreparedEnsemble::new(dataset, config)?;
    calibrate_f_prepared(&prepared, config, target, f_grid)
}

pub fn calibrate_f_prepared(
    prepared: &PreparedEnsemble,
    config: &ExperimentConfig,
    target: f64,
    f_grid: &[f64],
) -> Result<Calibration> {
    if f_grid.len() < 3 {
        return Err(Error::InvalidConfig("f grid needs at least 3 points".into()));
    }
    if f_grid.windows(2).any(|w| !(w[1] > w[0])) || f_grid[0] < 0.0 {
        return Err(Error::InvalidConfig("f grid must be nonnegative and increasing".into()));
    }
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::InvalidConfig(format!("target coverage {target} outside (0, 1]")));
    }
    let rounds = if prepared.observations.is_some() { 1 } else { prepared.k() };
    let granularity = 1.0 / rounds as f64;
    let mut reports = Vec::with_capacity(f_grid.len());
    for &f in f_grid {
        let report = run_loocv_prepared(prepared, config, f)?;
        log::info!("f = {f}: coverage {:.3}, mciw {:.4}", report.coverage, report.mciw);
        reports.push(report);
    }
    let trace: Vec<CalibrationStep> = reports
        .iter()
        .map(|r| CalibrationStep {
            f: r.f,
            coverage: r.coverage,
            mciw: r.mciw,
            mab: r.mab,
        })
        .collect();
    let coverages: Vec<f64> = trace.iter().map(|s| s.coverage).collect();
    Ok(match select_f(&coverages, target, granularity) {
        Some(i) => Calibration {
            target,
            granularity,
            f_star: Some(f_grid[i]),
            trace,
            report: Some(reports.swap_remove(i)),
            failure: None,
        },
        None => Calibration {
            target,
            granularity,
            f_star: None,
            failure: Some(format!(
                "no f in [{}, {}] reaches coverage {:.3}; best was {:.3}",
                f_grid[0],
                f_grid[f_grid.len() - 1],
                target - granularity,
                coverages.iter().copied().fold(0.0, f64::max)
            )),
            trace,
            report: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_f_rules() {
        let g = 1.0 / 12.0;
        // reaches 11/12 then overshoots
        let c = [0.5, 10.0 / 12.0, 11.0 / 12.0, 11.0 / 12.0, 1.0];
        assert_eq!(select_f(&c, 0.9, g), Some(2));
        // jumps straight past the window
        let c = [0.25, 0.5, 1.0, 1.0];
        assert_eq!(select_f(&c, 0.9, g), Some(2));
        // never close enough
        let c = [0.1, 0.2, 0.3];
        assert_eq!(select_f(&c, 0.9, g), None);
        // all 1.0 with coarse granularity
        assert_eq!(select_f(&[1.0, 1.0, 1.0], 0.9, 1.0 / 3.0), Some(0));
        assert_eq!(select_f(&[1.0, 1.0, 1.0], 0.9, 1.0 / 20.0), Some(0));
    }

    #[test]
    fn default_grid_shape() {
        let g = default_f_grid();
        assert_eq!(g.len(), 20);
        assert_eq!((g[0], g[19]), (0.25, 5.0));
    }
}
