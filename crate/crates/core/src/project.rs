//! Weighted probabilistic projections of the change between the projection
//! reference period and the projection period.
//!
//! Each draw picks a model by weight, adds a time-constant bias
//! `b ~ N(0, (f * sigma_b)^2)` to its future trend, adds internal
//! variability (bootstrap of future anomalies, or AR(1) simulation from
//! their fitted parameters) and subtracts the model's reference-period mean.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ar1::{ar1_mle, Ar1Params};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng, tag};
use crate::stats;
use crate::trend_weight::{closest_other, DistanceMetric};
use crate::weights::WeightVector;

/// Draws per independently seeded chunk.
const CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionVariant {
    #[default]
    Boot,
    Ar1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFuture {
    pub id: String,
    /// Projection-period trend.
    pub trend: Vec<f64>,
    /// Projection-period anomalies (absolute units).
    pub anomalies: Vec<f64>,
    /// Raw model mean over the projection reference period.
    pub reference_mean: f64,
    /// Fitted AR(1) parameters of `anomalies`; estimated on demand when
    /// absent and the AR(1) variant is requested.
    #[serde(default)]
    pub ar1: Option<Ar1Params>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionInputs {
    pub models: Vec<ModelFuture>,
    pub weights: WeightVector,
    /// Next-closest future-mean difference sd.
    pub bias_scale: f64,
    pub f: f64,
    pub variant: ProjectionVariant,
    pub n_draws: usize,
}

pub const DEFAULT_PROJECTION_DRAWS: usize = 100_000;

impl ProjectionInputs {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::InsufficientEnsemble { needed: 1, got: 0 });
        }
        if self.weights.len() != self.models.len() {
            return Err(Error::InvalidInput(format!(
                "{} weights for {} models",
                self.weights.len(),
                self.models.len()
            )));
        }
        let m = self.models[0].trend.len();
        if m == 0 {
            return Err(Error::InvalidInput("empty projection period".into()));
        }
        for model in &self.models {
            if model.trend.len() != m || model.anomalies.len() != m {
                return Err(Error::InvalidInput(format!(
                    "future vectors of `{}` do not have length {m}",
                    model.id
                )));
            }
        }
        if !(self.bias_scale >= 0.0 && self.bias_scale.is_finite()) {
            return Err(Error::InvalidInput(format!("bias scale {} must be >= 0", self.bias_scale)));
        }
        if !(self.f >= 0.0 && self.f.is_finite()) {
            return Err(Error::InvalidConfig(format!("error expansion factor {} must be >= 0", self.f)));
        }
        if self.n_draws == 0 {
            return Err(Error::InvalidConfig("n_draws must be positive".into()));
        }
        Ok(())
    }
}

/// Sample sd of `means_i - means_{closest(i)}`, with `closest` the nearest
/// other model by `metric` distance between the `vectors`.
pub fn future_bias_scale_with(
    vectors: &[Vec<f64>],
    means: &[f64],
    metric: DistanceMetric,
) -> Result<f64> {
    let k = vectors.len();
    if k < 2 {
        return Err(Error::InsufficientEnsemble { needed: 2, got: k });
    }
    if means.len() != k {
        return Err(Error::InvalidInput(format!("{} means for {k} models", means.len())));
    }
    if k == 2 {
        log::warn!("bias scale from two models rests on one mirrored difference");
    }
    let diffs: Vec<f64> = (0..k)
        .map(|i| means[i] - means[closest_other(vectors, i, metric)])
        .collect();
    Ok(stats::std_dev(&diffs))
}

/// Bias scale from future vectors, using their own period means.
pub fn future_bias_scale(future: &[Vec<f64>]) -> Result<f64> {
    let means: Vec<f64> = future.iter().map(|v| stats::mean(v)).collect();
    future_bias_scale_with(future, &means, DistanceMetric::L1)
}

/// Gaussian kernel density on a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

pub const KDE_GRID_POINTS: usize = 512;

/// Silverman's rule `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`, falling back
/// to the sd when the IQR vanishes. Expects sorted input.
pub fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let sd = stats::std_dev(sorted);
    let iqr = stats::quantile_sorted(sorted, 0.75) - stats::quantile_sorted(sorted, 0.25);
    let mut spread = sd.min(iqr / 1.34);
    if !(spread > 0.0) {
        spread = sd;
    }
    0.9 * spread * n.powf(-0.2)
}

/// Linear-binned Gaussian KDE on `KDE_GRID_POINTS` points spanning the
/// sample range widened by three bandwidths. `None` when the bandwidth is
/// zero (all samples equal).
pub fn density_grid(sorted: &[f64]) -> Option<DensityGrid> {
    let h = silverman_bandwidth(sorted);
    if !(h > 0.0) {
        return None;
    }
    let g = KDE_GRID_POINTS;
    let lo = sorted[0] - 3.0 * h;
    let hi = sorted[sorted.len() - 1] + 3.0 * h;
    let dx = (hi - lo) / (g - 1) as f64;
    let x: Vec<f64> = (0..g).map(|i| lo + dx * i as f64).collect();

    let mut counts = vec![0.0; g];
    for &v in sorted {
        let pos = (v - lo) / dx;
        let i = (pos.floor() as usize).min(g - 2);
        let frac = pos - i as f64;
        counts[i] += 1.0 - frac;
        counts[i + 1] += frac;
    }
    let norm = 1.0 / (sorted.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let kernel: Vec<f64> = (0..g)
        .map(|d| {
            let u = d as f64 * dx / h;
            (-0.5 * u * u).exp() * norm
        })
        .collect();
    let density = (0..g)
        .map(|i| {
            counts
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != 0.0)
                .map(|(j, c)| c * kernel[i.abs_diff(j)])
                .sum()
        })
        .collect();
    Some(DensityGrid {
        x,
        density,
        bandwidth: h,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub mode: f64,
    /// Equal-tailed 5th and 95th percentiles.
    pub ci90: (f64, f64),
    /// KDE bandwidth behind `mode`; 0 for a constant sample.
    pub bandwidth: f64,
}

impl Summary {
    pub fn ci_width(&self) -> f64 {
        self.ci90.1 - self.ci90.0
    }

    pub fn covers(&self, value: f64) -> bool {
        value >= self.ci90.0 && value <= self.ci90.1
    }
}

pub fn summarize(samples: &[f64]) -> Result<Summary> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    summarize_sorted(&sorted)
}

pub(crate) fn summarize_sorted(sorted: &[f64]) -> Result<Summary> {
    if sorted.is_empty() {
        return Err(Error::InvalidInput("cannot summarize an empty sample".into()));
    }
    if sorted.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalDegeneracy("non-finite projection sample".into()));
    }
    let median = stats::quantile_sorted(sorted, 0.5);
    let (mode, bandwidth) = match density_grid(sorted) {
        Some(grid) => {
            let i = grid
                .density
                .iter()
                .enumerate()
                .fold(0, |best, (i, d)| if *d > grid.density[best] { i } else { best });
            (grid.x[i], grid.bandwidth)
        }
        None => (median, 0.0),
    };
    Ok(Summary {
        mean: stats::mean(sorted),
        median,
        mode,
        ci90: (
            stats::quantile_sorted(sorted, 0.05),
            stats::quantile_sorted(sorted, 0.95),
        ),
        bandwidth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub delta_samples: Vec<f64>,
    pub summary: Summary,
    pub per_model_draw_counts: Vec<usize>,
}

impl ProjectionResult {
    pub fn density(&self) -> Option<DensityGrid> {
        let mut sorted = self.delta_samples.clone();
        sorted.sort_by(f64::total_cmp);
        density_grid(&sorted)
    }
}

pub fn sample_projection(inputs: &ProjectionInputs, seed: u64) -> Result<ProjectionResult> {
    inputs.validate()?;
    let m = inputs.models[0].trend.len();
    let offsets: Vec<f64> = inputs
        .models
        .iter()
        .map(|model| stats::mean(&model.trend) - model.reference_mean)
        .collect();
    let ar1: Vec<Option<Ar1Params>> = match inputs.variant {
        ProjectionVariant::Boot => vec![None; inputs.models.len()],
        ProjectionVariant::Ar1 => inputs
            .models
            .iter()
            .map(|model| match model.ar1 {
                Some(p) => Ok(Some(p)),
                None => ar1_mle(&model.anomalies)
                    .map(Some)
                    .map_err(|e| e.for_model(model.id.clone())),
            })
            .collect::<Result<_>>()?,
    };
    let mut cumulative = Vec::with_capacity(inputs.weights.len());
    let mut acc = 0.0;
    for w in inputs.weights.as_slice() {
        acc += w;
        cumulative.push(acc);
    }
    let last_positive = inputs
        .weights
        .as_slice()
        .iter()
        .rposition(|w| *w > 0.0)
        .unwrap_or(0);
    let bias_sd = inputs.f * inputs.bias_scale;
    let stream_seed = derive_seed(seed, &[tag::PROJECTION]);

    let mut samples = Vec::with_capacity(inputs.n_draws);
    let mut counts = vec![0usize; inputs.models.len()];
    let mut chunk = 0u64;
    while samples.len() < inputs.n_draws {
        let mut rng = stream_rng(stream_seed, chunk);
        let todo = CHUNK.min(inputs.n_draws - samples.len());
        for _ in 0..todo {
            let u: f64 = rng.random::<f64>() * acc;
            let i = cumulative.partition_point(|c| *c <= u).min(last_positive);
            counts[i] += 1;
            let z: f64 = rng.sample(StandardNormal);
            let noise_mean = match &ar1[i] {
                None => {
                    let a = &inputs.models[i].anomalies;
                    let mut s = 0.0;
                    for _ in 0..m {
                        s += a[rng.random_range(0..m)];
                    }
                    s / m as f64
                }
                Some(p) => {
                    let mut x = p.stationary_sd() * rng.sample::<f64, _>(StandardNormal);
                    let mut s = x;
                    for _ in 1..m {
                        x = p.rho * x + p.sigma * rng.sample::<f64, _>(StandardNormal);
                        s += x;
                    }
                    s / m as f64
                }
            };
            samples.push(offsets[i] + bias_sd * z + noise_mean);
        }
        chunk += 1;
    }

    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let summary = summarize_sorted(&sorted)?;
    Ok(ProjectionResult {
        delta_samples: samples,
        summary,
        per_model_draw_counts: counts,
    })
}
