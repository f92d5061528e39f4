//! Seeded synthetic ensembles with known ground truth.
//!
//! Model `j` is `trend_j(t) + AR(1)(sigma_j, rho_j)` over one continuous
//! axis covering calibration, an optional gap and the projection period.
//! The trend is an offset plus a linear drift plus a quadratic term that
//! starts after the calibration period, scaled so the trend-implied change
//! equals a target `D_j`. The coupling coefficient `c` correlates `D_j`
//! with the model's innovation sd:
//! `D_j = mean + sd * (c * z_j + sqrt(1 - c^2) * eta_j)`, with `z_j` the
//! standardized `sigma_j`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ar1::{simulate_into, Ar1Params};
use crate::dataset::{EnsembleDataset, ModelSeries};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng, tag};
use crate::series::{Period, TimeSeries};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticEnsembleSpec {
    pub name: String,
    pub k: usize,
    pub start_time: i64,
    pub n_cal: usize,
    /// Years between calibration and projection periods.
    pub n_gap: usize,
    pub n_proj: usize,
    /// Projection reference period; the calibration period when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<Period>,
    pub offset_range: (f64, f64),
    /// Linear drift per time step.
    pub slope_range: (f64, f64),
    pub change_mean: f64,
    pub change_sd: f64,
    pub sigma_range: (f64, f64),
    pub rho_range: (f64, f64),
    pub coupling: f64,
    /// Also simulate one extra member, stored as observations over the
    /// whole axis.
    pub observations: bool,
    pub seed: u64,
}

impl Default for SyntheticEnsembleSpec {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            k: 12,
            start_time: 1950,
            n_cal: 56,
            n_gap: 0,
            n_proj: 30,
            reference: None,
            offset_range: (-0.5, 0.5),
            slope_range: (0.0, 0.02),
            change_mean: 2.0,
            change_sd: 0.8,
            sigma_range: (0.2, 1.0),
            rho_range: (0.0, 0.7),
            coupling: 0.0,
            observations: false,
            seed: 1,
        }
    }
}

impl SyntheticEnsembleSpec {
    pub fn calibration_period(&self) -> Period {
        Period::new(self.start_time, self.start_time + self.n_cal as i64 - 1)
    }

    pub fn projection_period(&self) -> Period {
        let start = self.start_time + (self.n_cal + self.n_gap) as i64;
        Period::new(start, start + self.n_proj as i64 - 1)
    }

    pub fn reference_period(&self) -> Period {
        self.reference.unwrap_or_else(|| self.calibration_period())
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 3 {
            return Err(Error::InvalidConfig(format!("synthetic ensemble needs k >= 3, got {}", self.k)));
        }
        if self.n_cal < 8 || self.n_proj < 2 {
            return Err(Error::InvalidConfig("need n_cal >= 8 and n_proj >= 2".into()));
        }
        if !(-1.0..=1.0).contains(&self.coupling) {
            return Err(Error::InvalidConfig(format!("coupling {} outside [-1, 1]", self.coupling)));
        }
        let ordered = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a <= b;
        if !ordered(self.offset_range) || !ordered(self.slope_range) {
            return Err(Error::InvalidConfig("trend ranges must be finite and ordered".into()));
        }
        if !ordered(self.sigma_range) || self.sigma_range.0 <= 0.0 {
            return Err(Error::InvalidConfig("sigma range must be positive and ordered".into()));
        }
        if !ordered(self.rho_range) || self.rho_range.0 <= -1.0 || self.rho_range.1 >= 1.0 {
            return Err(Error::InvalidConfig("rho range must lie inside (-1, 1)".into()));
        }
        if !(self.change_sd >= 0.0) {
            return Err(Error::InvalidConfig("change sd must be >= 0".into()));
        }
        let reference = self.reference_period();
        reference.validate("reference")?;
        let cal = self.calibration_period();
        if reference.start < cal.start || reference.end > cal.end {
            return Err(Error::InvalidConfig("reference period must lie in the calibration period".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub id: String,
    pub params: Ar1Params,
    /// Trend over the whole axis, calibration through projection.
    pub trend: Vec<f64>,
    /// Trend-implied change between reference and projection means.
    pub true_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEnsemble {
    pub dataset: EnsembleDataset,
    pub truth: Vec<SyntheticTruth>,
}

fn uniform<R: Rng>(rng: &mut R, (a, b): (f64, f64)) -> f64 {
    a + (b - a) * rng.random::<f64>()
}

pub fn generate_synthetic_ensemble(spec: &SyntheticEnsembleSpec) -> Result<SyntheticEnsemble> {
    spec.validate()?;
    let k = spec.k;
    let total = spec.n_cal + spec.n_gap + spec.n_proj;
    let cal = spec.calibration_period();
    let reference = spec.reference_period();
    let projection = spec.projection_period();
    let seed = derive_seed(spec.seed, &[tag::SYNTHETIC]);
    let mut rng = stream_rng(seed, 0);

    let params: Vec<(f64, f64)> = (0..k)
        .map(|_| (uniform(&mut rng, spec.sigma_range), uniform(&mut rng, spec.rho_range)))
        .collect();
    let sigmas: Vec<f64> = params.iter().map(|p| p.0).collect();
    let (mu, sd) = (stats::mean(&sigmas), stats::std_dev(&sigmas));
    let c = spec.coupling;
    let deltas: Vec<f64> = sigmas
        .iter()
        .map(|s| {
            let z = if sd > 0.0 { (s - mu) / sd } else { 0.0 };
            let eta: f64 = rng.sample(StandardNormal);
            spec.change_mean + spec.change_sd * (c * z + (1.0 - c * c).sqrt() * eta)
        })
        .collect();

    let t_of = |time: i64| (time - spec.start_time) as f64;
    let t_split = spec.n_cal as f64 - 1.0;
    let span = (total as f64 - 1.0 - t_split).max(1.0);
    let psi = |t: f64| if t > t_split { ((t - t_split) / span).powi(2) } else { 0.0 };
    let period_mean = |p: Period, g: &dyn Fn(f64) -> f64| {
        let v: Vec<f64> = (p.start..=p.end).map(|time| g(t_of(time))).collect();
        stats::mean(&v)
    };
    let lin_shift = period_mean(projection, &|t| t) - period_mean(reference, &|t| t);
    let psi_shift = period_mean(projection, &psi);

    let mut noise = Vec::with_capacity(total);
    let mut member = |p: &Ar1Params, delta: f64, offset: f64, slope: f64, stream: u64| {
        let amplitude = (delta - slope * lin_shift) / psi_shift;
        let trend: Vec<f64> = (0..total)
            .map(|i| {
                let t = i as f64;
                offset + slope * t + amplitude * psi(t)
            })
            .collect();
        noise.clear();
        simulate_into(p, total, &mut stream_rng(seed, stream), &mut noise);
        let values: Vec<f64> = trend.iter().zip(&noise).map(|(a, b)| a + b).collect();
        TimeSeries::from_values(spec.start_time, values).map(|s| (trend, s))
    };

    let mut models = Vec::with_capacity(k);
    let mut truth = Vec::with_capacity(k);
    for (j, (&(sigma, rho), &delta)) in params.iter().zip(&deltas).enumerate() {
        let offset = uniform(&mut rng, spec.offset_range);
        let slope = uniform(&mut rng, spec.slope_range);
        let p = Ar1Params::new(sigma, rho)?;
        let (trend, series) = member(&p, delta, offset, slope, 1 + j as u64)?;
        let id = format!("m{:02}", j + 1);
        models.push(ModelSeries {
            id: id.clone(),
            calibration: series.slice(&cal)?,
            projection: series.slice(&projection)?,
        });
        truth.push(SyntheticTruth {
            id,
            params: p,
            trend,
            true_delta: delta,
        });
    }
    // Observations come from their own stream so the models do not depend
    // on whether they are requested; their change is uncoupled.
    let observations = if spec.observations {
        let mut obs_rng = stream_rng(seed, u64::MAX);
        let p = Ar1Params::new(
            uniform(&mut obs_rng, spec.sigma_range),
            uniform(&mut obs_rng, spec.rho_range),
        )?;
        let eta: f64 = obs_rng.sample(StandardNormal);
        let offset = uniform(&mut obs_rng, spec.offset_range);
        let slope = uniform(&mut obs_rng, spec.slope_range);
        let delta = spec.change_mean + spec.change_sd * eta;
        Some(member(&p, delta, offset, slope, 1 + k as u64)?.1)
    } else {
        None
    };
    let dataset = EnsembleDataset {
        name: spec.name.clone(),
        units: "1".into(),
        variable: None,
        calibration: cal,
        projection_reference: reference,
        projection,
        models,
        observations,
    };
    dataset.validate()?;
    Ok(SyntheticEnsemble { dataset, truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trend_implied_change_matches_target() {
        let s = generate_synthetic_ensemble(&SyntheticEnsembleSpec::default()).unwrap();
        let spec = SyntheticEnsembleSpec::default();
        let n_cal = spec.n_cal;
        for t in &s.truth {
            let r = stats::mean(&t.trend[..n_cal]);
            let p = stats::mean(&t.trend[n_cal..]);
            assert!((p - r - t.true_delta).abs() < 1e-9);
        }
    }

    #[test]
    fn calibration_trend_is_linear() {
        let s = generate_synthetic_ensemble(&SyntheticEnsembleSpec::default()).unwrap();
        let tr = &s.truth[0].trend;
        let d: Vec<f64> = tr[..56].windows(2).map(|w| w[1] - w[0]).collect();
        assert!(d.iter().all(|x| (x - d[0]).abs() < 1e-12));
    }

    #[test]
    fn seed_determinism() {
        let spec = SyntheticEnsembleSpec::default();
        assert_eq!(
            generate_synthetic_ensemble(&spec).unwrap(),
            generate_synthetic_ensemble(&spec).unwrap()
        );
    }

    #[test]
    fn observations_span_the_axis() {
        let spec = SyntheticEnsembleSpec {
            observations: true,
            n_gap: 4,
            ..Default::default()
        };
        let s = generate_synthetic_ensemble(&spec).unwrap();
        assert_eq!(s.dataset.k(), 12);
        assert_eq!(s.truth.len(), 12);
        assert_eq!(s.dataset.observations.as_ref().unwrap().len(), 56 + 4 + 30);
        // members before the extra one are unchanged
        let plain = generate_synthetic_ensemble(&SyntheticEnsembleSpec { n_gap: 4, ..Default::default() }).unwrap();
        assert_eq!(plain.dataset.models, s.dataset.models[..]);
    }

    #[test]
    fn axes() {
        let spec = SyntheticEnsembleSpec {
            n_gap: 10,
            ..Default::default()
        };
        let s = generate_synthetic_ensemble(&spec).unwrap();
        let m = &s.dataset.models[0];
        assert_eq!(m.calibration.times()[0], 1950);
        assert_eq!(m.calibration.len(), 56);
        assert_eq!(m.projection.times()[0], 1950 + 66);
        assert_eq!(m.projection.len(), 30);
    }
}
