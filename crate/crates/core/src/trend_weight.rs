//! Trend-submodel weights.
//!
//! Each model's trend is tied to the observed raw series through a sampled
//! discrepancy `f * eps` (drawn from next-closest inter-model trend
//! differences) and AR(1) residual noise with `(sigma, rho)` drawn from a
//! uniform box. The marginal likelihood of every model is a plain Monte
//! Carlo mean, accumulated in log space.
//!
//! Draw protocol (fixed, so results are reproducible and label-free):
//! the discrepancy pool is put in canonical (lexicographic) order, then a
//! single stream derived from the seed yields, per sample, a pool index, a
//! sigma and a rho, in that order. Every model is integrated against the
//! same draws (common random numbers).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ar1::conditional_loglik;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng, tag};
use crate::stats::{self, log_sum_exp};
use crate::weights::WeightVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleTrends {
    pub model_ids: Vec<String>,
    pub trends: Vec<Vec<f64>>,
}

impl EnsembleTrends {
    pub fn new(model_ids: Vec<String>, trends: Vec<Vec<f64>>) -> Result<Self> {
        if trends.len() < 2 {
            return Err(Error::InsufficientEnsemble {
                needed: 2,
                got: trends.len(),
            });
        }
        if model_ids.len() != trends.len() {
            return Err(Error::InvalidInput(format!(
                "{} ids for {} trends",
                model_ids.len(),
                trends.len()
            )));
        }
        let n = trends[0].len();
        if n < 2 {
            return Err(Error::InvalidInput("trends need at least 2 points".into()));
        }
        if let Some(i) = trends.iter().position(|t| t.len() != n) {
            return Err(Error::InvalidInput(format!(
                "trend of `{}` has length {}, expected {n}",
                model_ids[i],
                trends[i].len()
            )));
        }
        Ok(Self { model_ids, trends })
    }

    /// Ids `m0, m1, ...`.
    pub fn anonymous(trends: Vec<Vec<f64>>) -> Result<Self> {
        let ids = (0..trends.len()).map(|i| format!("m{i}")).collect();
        Self::new(ids, trends)
    }

    pub fn k(&self) -> usize {
        self.trends.len()
    }

    pub fn n(&self) -> usize {
        self.trends[0].len()
    }
}

/// Distance used to find the next-closest model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    L1,
    L2,
}

impl DistanceMetric {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            DistanceMetric::L1 => stats::l1_distance(a, b),
            DistanceMetric::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        }
    }
}

/// Index of the nearest other vector (lowest index on ties).
pub fn closest_other(vectors: &[Vec<f64>], j: usize, metric: DistanceMetric) -> usize {
    let mut best = usize::MAX;
    let mut best_d = f64::INFINITY;
    for (i, v) in vectors.iter().enumerate() {
        if i == j {
            continue;
        }
        let d = metric.distance(&vectors[j], v);
        if best == usize::MAX || d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyPool {
    /// `samples[j] = trend_j - trend_{closest(j)}`.
    pub samples: Vec<Vec<f64>>,
    /// `(j, closest(j))`.
    pub source_pairs: Vec<(usize, usize)>,
}

impl DiscrepancyPool {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples in lexicographic order; the order the sampler draws from.
    pub fn canonical_samples(&self) -> Vec<&[f64]> {
        let mut s: Vec<&[f64]> = self.samples.iter().map(Vec::as_slice).collect();
        s.sort_by(|a, b| lexicographic(a, b));
        s
    }
}

pub(crate) fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

pub fn build_discrepancy_pool(trends: &EnsembleTrends) -> Result<DiscrepancyPool> {
    build_discrepancy_pool_with(trends, DistanceMetric::L1)
}

pub fn build_discrepancy_pool_with(
    trends: &EnsembleTrends,
    metric: DistanceMetric,
) -> Result<DiscrepancyPool> {
    if trends.k() < 2 {
        return Err(Error::InsufficientEnsemble {
            needed: 2,
            got: trends.k(),
        });
    }
    let mut samples = Vec::with_capacity(trends.k());
    let mut source_pairs = Vec::with_capacity(trends.k());
    for j in 0..trends.k() {
        let c = closest_other(&trends.trends, j, metric);
        samples.push(
            trends.trends[j]
                .iter()
                .zip(&trends.trends[c])
                .map(|(a, b)| a - b)
                .collect(),
        );
        source_pairs.push((j, c));
    }
    Ok(DiscrepancyPool {
        samples,
        source_pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPrior {
    pub sigma_range: (f64, f64),
    pub rho_range: (f64, f64),
    /// Uniform when `None`.
    #[serde(default)]
    pub model_priors: Option<Vec<f64>>,
}

impl Default for TrendPrior {
    fn default() -> Self {
        Self {
            sigma_range: (0.0, 5.0),
            rho_range: (-1.0, 1.0),
            model_priors: None,
        }
    }
}

impl TrendPrior {
    pub fn validate(&self, k: usize) -> Result<()> {
        let (s0, s1) = self.sigma_range;
        let (r0, r1) = self.rho_range;
        if !(s0 >= 0.0 && s1 > s0 && s1.is_finite()) {
            return Err(Error::InvalidConfig(format!("bad sigma prior range {:?}", self.sigma_range)));
        }
        if !(r0 >= -1.0 && r1 > r0 && r1 <= 1.0) {
            return Err(Error::InvalidConfig(format!("bad rho prior range {:?}", self.rho_range)));
        }
        if let Some(p) = &self.model_priors {
            if p.len() != k {
                return Err(Error::InvalidConfig(format!("{} model priors for {k} models", p.len())));
            }
            WeightVector::new(p.clone())
                .map_err(|e| Error::InvalidConfig(format!("model priors: {e}")))?;
        }
        Ok(())
    }

    pub(crate) fn log_model_priors(&self, k: usize) -> Vec<f64> {
        match &self.model_priors {
            Some(p) => p.iter().map(|v| v.ln()).collect(),
            None => vec![0.0; k],
        }
    }
}

/// One Monte Carlo draw of the trend integrand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendDraw {
    /// Index into the canonically ordered pool.
    pub pool_index: usize,
    pub sigma: f64,
    pub rho: f64,
}

/// The draws shared by every model, per the module's draw protocol.
pub fn trend_draws(pool_len: usize, prior: &TrendPrior, n_samples: usize, seed: u64) -> Vec<TrendDraw> {
    let mut rng = stream_rng(derive_seed(seed, &[tag::TREND]), 0);
    let (s0, s1) = prior.sigma_range;
    let (r0, r1) = prior.rho_range;
    (0..n_samples)
        .map(|_| {
            let pool_index = rng.random_range(0..pool_len);
            let sigma = s0 + (s1 - s0) * rng.random::<f64>();
            let rho = r0 + (r1 - r0) * rng.random::<f64>();
            TrendDraw {
                pool_index,
                sigma,
                rho,
            }
        })
        .collect()
}

/// Log marginal likelihood `ln p(y' | M_T,i)` for every model (priors not
/// included).
pub fn trend_log_marginals(
    trends: &EnsembleTrends,
    observed: &[f64],
    pool: &DiscrepancyPool,
    f: f64,
    prior: &TrendPrior,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = trends.n();
    if observed.len() != n {
        return Err(Error::InvalidInput(format!(
            "observation length {} != trend length {n}",
            observed.len()
        )));
    }
    if pool.is_empty() || pool.samples.iter().any(|s| s.len() != n) {
        return Err(Error::InvalidInput("discrepancy pool does not match trends".into()));
    }
    if !(f >= 0.0 && f.is_finite()) {
        return Err(Error::InvalidConfig(format!("error expansion factor {f} must be >= 0")));
    }
    if n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be positive".into()));
    }
    prior.validate(trends.k())?;

    let canonical = pool.canonical_samples();
    let draws = trend_draws(canonical.len(), prior, n_samples, seed);
    let ln_n = (n_samples as f64).ln();
    let mut ll = vec![0.0; n_samples];

    let marginals = trends
        .trends
        .iter()
        .map(|x| {
            let residuals: Vec<Vec<f64>> = canonical
                .iter()
                .map(|eps| (0..n).map(|t| observed[t] - (x[t] + f * eps[t])).collect())
                .collect();
            for (slot, d) in ll.iter_mut().zip(&draws) {
                *slot = conditional_loglik(&residuals[d.pool_index], d.sigma, d.rho);
            }
            log_sum_exp(&ll) - ln_n
        })
        .collect::<Vec<f64>>();

    if marginals.iter().all(|m| *m == f64::NEG_INFINITY || m.is_nan()) {
        return Err(Error::NumericalDegeneracy(
            "all trend marginal likelihoods are zero".into(),
        ));
    }
    Ok(marginals)
}

/// `p(M_T,i | y')` for every model.
pub fn trend_weights(
    trends: &EnsembleTrends,
    observed: &[f64],
    pool: &DiscrepancyPool,
    f: f64,
    prior: &TrendPrior,
    n_samples: usize,
    seed: u64,
) -> Result<WeightVector> {
    let marginals = trend_log_marginals(trends, observed, pool, f, prior, n_samples, seed)?;
    let log_w: Vec<f64> = prior
        .log_model_priors(trends.k())
        .iter()
        .zip(&marginals)
        .map(|(p, m)| p + m)
        .collect();
    WeightVector::from_log(&log_w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_models_give_zero_discrepancy() {
        let t = EnsembleTrends::anonymous(vec![vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let pool = build_discrepancy_pool(&t).unwrap();
        assert!(pool.samples.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn next_closest_by_l1() {
        let t = EnsembleTrends::anonymous(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![5.0, 5.0]])
            .unwrap();
        let pool = build_discrepancy_pool(&t).unwrap();
        assert_eq!(pool.len(), 3);
        assert_eq!(pool.source_pairs, vec![(0, 1), (1, 0), (2, 1)]);
        assert_eq!(pool.samples[2], vec![4.0, 4.0]);
        assert_eq!(pool.samples[0], vec![-1.0, -1.0]);
    }

    #[test]
    fn needs_two_models() {
        assert!(matches!(
            EnsembleTrends::anonymous(vec![vec![0.0, 1.0]]),
            Err(Error::InsufficientEnsemble { .. })
        ));
    }

    #[test]
    fn identical_trends_weigh_equally() {
        let trend: Vec<f64> = (0..20).map(|t| 0.1 * t as f64).collect();
        let t = EnsembleTrends::anonymous(vec![trend.clone(); 4]).unwrap();
        let pool = build_discrepancy_pool(&t).unwrap();
        let obs: Vec<f64> = trend.iter().enumerate().map(|(i, v)| v + 0.3 * (i as f64).sin()).collect();
        let w = trend_weights(&t, &obs, &pool, 1.0, &TrendPrior::default(), 2000, 1).unwrap();
        for v in w.as_slice() {
            assert_eq!(*v, 0.25);
        }
    }

    #[test]
    fn rejects_length_mismatch() {
        let t = EnsembleTrends::anonymous(vec![vec![0.0; 5], vec![1.0; 5]]).unwrap();
        let pool = build_discrepancy_pool(&t).unwrap();
        assert!(trend_weights(&t, &[0.0; 4], &pool, 1.0, &TrendPrior::default(), 10, 0).is_err());
    }
}
