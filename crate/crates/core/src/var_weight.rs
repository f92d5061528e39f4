//! Variability-submodel weights.
//!
//! Each model is summarized by its AR(1) MLE `(sigma, rho)`. Model error in
//! that summary is drawn from next-closest summary differences plus a zero
//! sample, scaled by `f` and smoothed with independent normal jitter whose
//! per-dimension sd is one fifth of the base-sample range. Sampled
//! parameters are clipped to `|rho| <= 0.999` and
//! `sigma >= 0.01 * min(sigma_M)` before the likelihood is evaluated.
//!
//! Draw protocol: base samples in canonical `(eps_sigma, eps_rho)` order;
//! one stream derived from the seed gives, per draw, a base index followed
//! by the sigma and rho standard-normal jitter. All models share the draws.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ar1::{ar1_mle, conditional_loglik, Ar1Params};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng, tag};
use crate::stats::log_sum_exp;
use crate::weights::WeightVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilitySummaries {
    pub model_ids: Vec<String>,
    pub stats: Vec<Ar1Params>,
}

impl VariabilitySummaries {
    pub fn new(model_ids: Vec<String>, stats: Vec<Ar1Params>) -> Result<Self> {
        if model_ids.len() != stats.len() {
            return Err(Error::InvalidInput(format!(
                "{} ids for {} summaries",
                model_ids.len(),
                stats.len()
            )));
        }
        for (id, p) in model_ids.iter().zip(&stats) {
            p.validate().map_err(|e| e.for_model(id.clone()))?;
        }
        Ok(Self { model_ids, stats })
    }

    pub fn k(&self) -> usize {
        self.stats.len()
    }

    pub fn min_sigma(&self) -> f64 {
        self.stats.iter().map(|p| p.sigma).fold(f64::INFINITY, f64::min)
    }
}

/// AR(1) MLE of every model's calibration anomalies.
pub fn summarize_variability(
    model_ids: &[String],
    anomalies: &[Vec<f64>],
) -> Result<VariabilitySummaries> {
    if model_ids.len() != anomalies.len() {
        return Err(Error::InvalidInput(format!(
            "{} ids for {} anomaly series",
            model_ids.len(),
            anomalies.len()
        )));
    }
    let stats = model_ids
        .iter()
        .zip(anomalies)
        .map(|(id, a)| ar1_mle(a).map_err(|e| e.for_model(id.clone())))
        .collect::<Result<Vec<_>>>()?;
    Ok(VariabilitySummaries {
        model_ids: model_ids.to_vec(),
        stats,
    })
}

/// For each model `i`, the other model whose parameters give model `i`'s
/// anomalies the highest conditional likelihood.
pub fn next_closest_var(
    summaries: &VariabilitySummaries,
    anomalies: &[Vec<f64>],
) -> Result<Vec<usize>> {
    let k = summaries.k();
    if k < 2 {
        return Err(Error::InsufficientEnsemble { needed: 2, got: k });
    }
    if anomalies.len() != k {
        return Err(Error::InvalidInput(format!("{} anomaly series for {k} models", anomalies.len())));
    }
    Ok((0..k)
        .map(|i| {
            let mut best = usize::MAX;
            let mut best_ll = f64::NEG_INFINITY;
            for (j, p) in summaries.stats.iter().enumerate() {
                if j == i {
                    continue;
                }
                let ll = conditional_loglik(&anomalies[i], p.sigma, p.rho);
                if best == usize::MAX || ll > best_ll {
                    best = j;
                    best_ll = ll;
                }
            }
            best
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarErrorPool {
    /// `(eps_sigma, eps_rho)`: the k next-closest differences, then `(0, 0)`.
    pub base_samples: Vec<(f64, f64)>,
    /// Jitter sd per dimension, before scaling by `f`.
    pub jitter_sd: (f64, f64),
}

impl VarErrorPool {
    pub fn canonical_samples(&self) -> Vec<(f64, f64)> {
        let mut s = self.base_samples.clone();
        s.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        s
    }
}

/// Fraction of the base-sample range used as jitter sd.
pub const JITTER_RANGE_FRACTION: f64 = 0.2;

pub fn build_var_error_pool(
    summaries: &VariabilitySummaries,
    assignments: &[usize],
) -> Result<VarErrorPool> {
    let k = summaries.k();
    if assignments.len() != k {
        return Err(Error::InvalidInput(format!("{} assignments for {k} models", assignments.len())));
    }
    let mut base_samples = Vec::with_capacity(k + 1);
    for (i, &j) in assignments.iter().enumerate() {
        if j >= k || j == i {
            return Err(Error::InvalidInput(format!("invalid next-closest assignment {i} -> {j}")));
        }
        let (a, b) = (summaries.stats[i], summaries.stats[j]);
        base_samples.push((a.sigma - b.sigma, a.rho - b.rho));
    }
    base_samples.push((0.0, 0.0));
    let range = |sel: fn(&(f64, f64)) -> f64| {
        let lo = base_samples.iter().map(sel).fold(f64::INFINITY, f64::min);
        let hi = base_samples.iter().map(sel).fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let jitter_sd = (
        JITTER_RANGE_FRACTION * range(|s| s.0),
        JITTER_RANGE_FRACTION * range(|s| s.1),
    );
    Ok(VarErrorPool {
        base_samples,
        jitter_sd,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClippingRule {
    pub rho_cap: f64,
    pub sigma_floor_factor: f64,
}

impl Default for ClippingRule {
    fn default() -> Self {
        Self {
            rho_cap: 0.999,
            sigma_floor_factor: 0.01,
        }
    }
}

/// One Monte Carlo draw for a given model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarDraw {
    /// Index into the canonically ordered base samples.
    pub base_index: usize,
    /// Standard-normal jitter `(z_sigma, z_rho)`.
    pub z: (f64, f64),
    /// Clipped parameters fed to the likelihood.
    pub sigma: f64,
    pub rho: f64,
}

fn raw_draws(pool_len: usize, n_samples: usize, seed: u64) -> Vec<(usize, f64, f64)> {
    let mut rng = stream_rng(derive_seed(seed, &[tag::VARIABILITY]), 0);
    (0..n_samples)
        .map(|_| {
            let u = rng.random_range(0..pool_len);
            let zs: f64 = rng.sample(StandardNormal);
            let zr: f64 = rng.sample(StandardNormal);
            (u, zs, zr)
        })
        .collect()
}

#[inline]
fn perturb(
    centre: &Ar1Params,
    base: (f64, f64),
    z: (f64, f64),
    jitter_sd: (f64, f64),
    f: f64,
    sigma_floor: f64,
    rho_cap: f64,
) -> (f64, f64) {
    let sigma = centre.sigma + f * (base.0 + jitter_sd.0 * z.0);
    let rho = centre.rho + f * (base.1 + jitter_sd.1 * z.1);
    (sigma.max(sigma_floor), rho.clamp(-rho_cap, rho_cap))
}

/// The parameter draws used for `model`; exposed for inspection.
pub fn variability_draws(
    summaries: &VariabilitySummaries,
    pool: &VarErrorPool,
    model: usize,
    f: f64,
    clip: &ClippingRule,
    n_samples: usize,
    seed: u64,
) -> Vec<VarDraw> {
    let canonical = pool.canonical_samples();
    let floor = clip.sigma_floor_factor * summaries.min_sigma();
    raw_draws(canonical.len(), n_samples, seed)
        .into_iter()
        .map(|(u, zs, zr)| {
            let (sigma, rho) = perturb(
                &summaries.stats[model],
                canonical[u],
                (zs, zr),
                pool.jitter_sd,
                f,
                floor,
                clip.rho_cap,
            );
            VarDraw {
                base_index: u,
                z: (zs, zr),
                sigma,
                rho,
            }
        })
        .collect()
}

/// `ln p(dy | M_V,i)` for every model.
pub fn var_log_marginals(
    summaries: &VariabilitySummaries,
    pool: &VarErrorPool,
    observed: &[f64],
    f: f64,
    clip: &ClippingRule,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if observed.len() < 2 {
        return Err(Error::InvalidInput("observed anomalies need at least 2 points".into()));
    }
    if !(f >= 0.0 && f.is_finite()) {
        return Err(Error::InvalidConfig(format!("error expansion factor {f} must be >= 0")));
    }
    if n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be positive".into()));
    }
    if pool.base_samples.is_empty() {
        return Err(Error::InvalidInput("empty variability error pool".into()));
    }
    let canonical = pool.canonical_samples();
    let draws = raw_draws(canonical.len(), n_samples, seed);
    let floor = clip.sigma_floor_factor * summaries.min_sigma();
    let ln_n = (n_samples as f64).ln();
    let mut ll = vec![0.0; n_samples];

    let marginals: Vec<f64> = summaries
        .stats
        .iter()
        .map(|centre| {
            for (slot, &(u, zs, zr)) in ll.iter_mut().zip(&draws) {
                let (sigma, rho) = perturb(
                    centre,
                    canonical[u],
                    (zs, zr),
                    pool.jitter_sd,
                    f,
                    floor,
                    clip.rho_cap,
                );
                *slot = conditional_loglik(observed, sigma, rho);
            }
            log_sum_exp(&ll) - ln_n
        })
        .collect();
    if marginals.iter().all(|m| *m == f64::NEG_INFINITY || m.is_nan()) {
        return Err(Error::NumericalDegeneracy(
            "all variability marginal likelihoods are zero".into(),
        ));
    }
    Ok(marginals)
}

/// `p(M_V,i | dy)` under equal priors.
pub fn var_weights(
    summaries: &VariabilitySummaries,
    pool: &VarErrorPool,
    observed: &[f64],
    f: f64,
    clip: &ClippingRule,
    n_samples: usize,
    seed: u64,
) -> Result<WeightVector> {
    WeightVector::from_log(&var_log_marginals(summaries, pool, observed, f, clip, n_samples, seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ar1::ar1_simulate;

    fn ids(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("m{i}")).collect()
    }

    fn summaries(params: &[(f64, f64)]) -> VariabilitySummaries {
        VariabilitySummaries::new(
            ids(params.len()),
            params.iter().map(|&(s, r)| Ar1Params::new(s, r).unwrap()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_vectors_identical_summaries() {
        let a = ar1_simulate(&Ar1Params::new(1.0, 0.3).unwrap(), 50, 4).unwrap();
        let s = summarize_variability(&ids(3), &vec![a; 3]).unwrap();
        assert_eq!(s.k(), 3);
        assert!(s.stats.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn degenerate_series_names_model() {
        let good = ar1_simulate(&Ar1Params::new(1.0, 0.3).unwrap(), 50, 4).unwrap();
        let err = summarize_variability(&ids(2), &[good, vec![2.0; 50]]).unwrap_err();
        assert!(err.to_string().contains("m1"), "{err}");
    }

    #[test]
    fn two_models_pick_each_other() {
        let s = summaries(&[(1.0, 0.1), (2.0, 0.5)]);
        let a: Vec<Vec<f64>> = (0..2)
            .map(|i| ar1_simulate(&s.stats[i], 60, i as u64).unwrap())
            .collect();
        assert_eq!(next_closest_var(&s, &a).unwrap(), vec![1, 0]);
    }

    #[test]
    fn pool_of_identical_summaries_is_zero() {
        let s = summaries(&[(1.0, 0.2); 3]);
        let pool = build_var_error_pool(&s, &[1, 0, 0]).unwrap();
        assert_eq!(pool.base_samples.len(), 4);
        assert!(pool.base_samples.iter().all(|&p| p == (0.0, 0.0)));
        assert_eq!(pool.jitter_sd, (0.0, 0.0));
    }

    #[test]
    fn pool_hand_example() {
        // sigma = (1, 2, 4) with chain 0 -> 1, 1 -> 2, 2 -> 1:
        // eps_sigma = (-1, -2, 2) plus 0, range 4, jitter sd 0.8
        let s = summaries(&[(1.0, 0.1), (2.0, 0.3), (4.0, 0.2)]);
        let pool = build_var_error_pool(&s, &[1, 2, 1]).unwrap();
        let sig: Vec<f64> = pool.base_samples.iter().map(|p| p.0).collect();
        assert_eq!(sig, vec![-1.0, -2.0, 2.0, 0.0]);
        assert!((pool.jitter_sd.0 - 0.8).abs() < 1e-15);
        // eps_rho = (-0.2, 0.1, -0.1, 0): range 0.3
        assert!((pool.jitter_sd.1 - 0.06).abs() < 1e-12);
    }

    #[test]
    fn rejects_self_assignment() {
        let s = summaries(&[(1.0, 0.1), (2.0, 0.3)]);
        assert!(build_var_error_pool(&s, &[0, 0]).is_err());
    }

    #[test]
    fn identical_summaries_weigh_equally() {
        let s = summaries(&[(1.0, 0.4); 5]);
        let pool = build_var_error_pool(&s, &[1, 0, 0, 0, 0]).unwrap();
        let obs = ar1_simulate(&Ar1Params::new(1.3, 0.2).unwrap(), 40, 8).unwrap();
        let w = var_weights(&s, &pool, &obs, 1.0, &ClippingRule::default(), 500, 3).unwrap();
        assert!(w.as_slice().iter().all(|v| *v == 0.2));
    }
}
