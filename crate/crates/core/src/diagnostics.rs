//! Adequacy checks: independence of trend weights from variability
//! summaries, and AR(1) spectral envelopes for anomalies.

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::ar1::{ar1_mle, periodogram_with, simulate_into, Ar1Params};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng, tag};
use crate::stats;
use crate::var_weight::VariabilitySummaries;

/// Correlations at or above this magnitude raise the flag.
pub const INDEPENDENCE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    #[default]
    Pearson,
    Spearman,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowCorrelation {
    /// `None` when the weights row (or the summary) has no spread.
    pub r_sigma: Option<f64>,
    pub r_rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub method: Correlation,
    pub rows: Vec<RowCorrelation>,
    pub flagged: bool,
}

fn correlate(x: &[f64], y: &[f64], method: Correlation) -> Option<f64> {
    match method {
        Correlation::Pearson => stats::pearson(x, y),
        Correlation::Spearman => stats::pearson(&stats::ranks(x), &stats::ranks(y)),
    }
}

/// Per pseudo-truth row of `trend_weights`, the correlation between the
/// weights across models and the models' `sigma` and `rho` estimates.
pub fn independence_diagnostic(
    trend_weights: &[Vec<f64>],
    summaries: &VariabilitySummaries,
    method: Correlation,
) -> Result<IndependenceReport> {
    let k = summaries.k();
    if k < 4 {
        return Err(Error::InsufficientEnsemble { needed: 4, got: k });
    }
    if let Some(row) = trend_weights.iter().find(|r| r.len() != k) {
        return Err(Error::InvalidInput(format!("weights row of length {} for {k} models", row.len())));
    }
    let sigmas: Vec<f64> = summaries.stats.iter().map(|p| p.sigma).collect();
    let rhos: Vec<f64> = summaries.stats.iter().map(|p| p.rho).collect();
    let rows: Vec<RowCorrelation> = trend_weights
        .iter()
        .map(|w| RowCorrelation {
            r_sigma: correlate(w, &sigmas, method),
            r_rho: correlate(w, &rhos, method),
        })
        .collect();
    let flagged = rows
        .iter()
        .flat_map(|r| [r.r_sigma, r.r_rho])
        .flatten()
        .any(|r| r.abs() >= INDEPENDENCE_THRESHOLD);
    Ok(IndependenceReport {
        method,
        rows,
        flagged,
    })
}

pub const DEFAULT_REALIZATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEnvelope {
    pub params: Ar1Params,
    pub frequencies: Vec<f64>,
    pub observed: Vec<f64>,
    /// 5th percentile of simulated periodograms per frequency.
    pub lower: Vec<f64>,
    /// 95th percentile.
    pub upper: Vec<f64>,
    pub fraction_inside: f64,
}

/// Compares the periodogram of `anomalies` with the 5-95% envelope of
/// periodograms of AR(1) series simulated from their fitted parameters.
pub fn spectrum_envelope_check(
    anomalies: &[f64],
    n_realizations: usize,
    seed: u64,
) -> Result<SpectrumEnvelope> {
    let n = anomalies.len();
    if n < 16 {
        return Err(Error::InvalidInput(format!("spectrum check needs at least 16 points, got {n}")));
    }
    if n_realizations < 2 {
        return Err(Error::InvalidConfig("need at least 2 realizations".into()));
    }
    let params = ar1_mle(anomalies)?;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let observed = periodogram_with(anomalies, fft.as_ref());
    let n_freq = observed.powers.len();

    let mut rng = stream_rng(derive_seed(seed, &[tag::ENVELOPE]), 0);
    let mut by_freq = vec![Vec::with_capacity(n_realizations); n_freq];
    let mut sim = Vec::with_capacity(n);
    for _ in 0..n_realizations {
        sim.clear();
        simulate_into(&params, n, &mut rng, &mut sim);
        let p = periodogram_with(&sim, fft.as_ref());
        for (col, v) in by_freq.iter_mut().zip(p.powers) {
            col.push(v);
        }
    }
    let mut lower = Vec::with_capacity(n_freq);
    let mut upper = Vec::with_capacity(n_freq);
    for col in &mut by_freq {
        col.sort_by(f64::total_cmp);
        lower.push(stats::quantile_sorted(col, 0.05));
        upper.push(stats::quantile_sorted(col, 0.95));
    }
    let inside = observed
        .powers
        .iter()
        .zip(lower.iter().zip(&upper))
        .filter(|(p, (lo, hi))| *p >= *lo && *p <= *hi)
        .count();
    Ok(SpectrumEnvelope {
        params,
        frequencies: observed.frequencies,
        fraction_inside: inside as f64 / n_freq as f64,
        observed: observed.powers,
        lower,
        upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ar1::ar1_simulate;

    fn summaries(k: usize) -> VariabilitySummaries {
        VariabilitySummaries::new(
            (0..k).map(|i| format!("m{i}")).collect(),
            (0..k)
                .map(|i| Ar1Params::new(0.5 + 0.1 * i as f64, 0.05 * i as f64).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn uniform_row_is_undefined() {
        let r = independence_diagnostic(&[vec![0.2; 5]], &summaries(5), Correlation::Pearson).unwrap();
        assert_eq!(r.rows[0].r_sigma, None);
        assert!(!r.flagged);
    }

    #[test]
    fn proportional_weights_correlate_perfectly() {
        let s = summaries(5);
        let total: f64 = s.stats.iter().map(|p| p.sigma).sum();
        let w: Vec<f64> = s.stats.iter().map(|p| p.sigma / total).collect();
        let r = independence_diagnostic(&[w], &s, Correlation::Pearson).unwrap();
        assert!((r.rows[0].r_sigma.unwrap() - 1.0).abs() < 1e-12);
        assert!(r.flagged);
    }

    #[test]
    fn needs_four_models() {
        assert!(independence_diagnostic(&[vec![0.5; 3]], &summaries(3), Correlation::Pearson).is_err());
    }

    #[test]
    fn envelope_is_ordered() {
        let x = ar1_simulate(&Ar1Params::new(1.0, 0.5).unwrap(), 64, 3).unwrap();
        let e = spectrum_envelope_check(&x, 200, 1).unwrap();
        assert!(e.lower.iter().zip(&e.upper).all(|(l, u)| l <= u));
        assert!((0.0..=1.0).contains(&e.fraction_inside));
        assert_eq!(e.frequencies.len(), 32);
    }

    #[test]
    fn envelope_is_deterministic() {
        let x = ar1_simulate(&Ar1Params::new(1.0, 0.2).unwrap(), 40, 9).unwrap();
        assert_eq!(
            spectrum_envelope_check(&x, 100, 5).unwrap(),
            spectrum_envelope_check(&x, 100, 5).unwrap()
        );
    }
}
