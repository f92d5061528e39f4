//! AR(1) red noise: conditional likelihood, closed-form MLE, simulation and
//! the periodogram used by the spectral adequacy check.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::stats;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Largest |rho| returned by the estimator; keeps fits strictly stationary.
pub const MAX_ABS_RHO: f64 = 0.999;

/// Innovation standard deviation and lag-1 autocorrelation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1Params {
    pub sigma: f64,
    pub rho: f64,
}

impl Ar1Params {
    pub fn new(sigma: f64, rho: f64) -> Result<Self> {
        let p = Self { sigma, rho };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite() && self.rho.abs() < 1.0) {
            return Err(Error::InvalidParams {
                sigma: self.sigma,
                rho: self.rho,
            });
        }
        Ok(())
    }

    /// Standard deviation of the stationary process.
    pub fn stationary_sd(&self) -> f64 {
        self.sigma / (1.0 - self.rho * self.rho).sqrt()
    }
}

/// `sum_{t>=2} ln N(a_t; rho * a_{t-1}, sigma^2)`, conditional on `a_1`.
pub fn ar1_conditional_loglik(anomalies: &[f64], params: &Ar1Params) -> Result<f64> {
    if anomalies.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "AR(1) likelihood needs at least 2 points, got {}",
            anomalies.len()
        )));
    }
    if !(params.sigma > 0.0) {
        return Err(Error::InvalidParams {
            sigma: params.sigma,
            rho: params.rho,
        });
    }
    Ok(conditional_loglik(anomalies, params.sigma, params.rho))
}

/// Unchecked kernel shared by the Monte Carlo integrators, which sample
/// `(sigma, rho)` from boxes that touch the boundary. Non-positive sigma
/// yields `-inf`.
#[inline]
pub(crate) fn conditional_loglik(x: &[f64], sigma: f64, rho: f64) -> f64 {
    if !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let mut ss = 0.0;
    for t in 1..x.len() {
        let e = x[t] - rho * x[t - 1];
        ss += e * e;
    }
    let m = (x.len() - 1) as f64;
    -m * (HALF_LN_2PI + sigma.ln()) - 0.5 * ss / (sigma * sigma)
}

/// Conditional maximum-likelihood estimate.
///
/// `rho` is the no-intercept least-squares coefficient of `a_t` on
/// `a_{t-1}`, clamped to `±MAX_ABS_RHO`; `sigma` is the RMS of the implied
/// innovations.
pub fn ar1_mle(anomalies: &[f64]) -> Result<Ar1Params> {
    let n = anomalies.len();
    if n < 4 {
        return Err(Error::InvalidInput(format!(
            "AR(1) estimation needs at least 4 points, got {n}"
        )));
    }
    if stats::variance(anomalies) == 0.0 {
        return Err(Error::DegenerateSeries("zero variance".into()));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for t in 1..n {
        num += anomalies[t] * anomalies[t - 1];
        den += anomalies[t - 1] * anomalies[t - 1];
    }
    if den == 0.0 {
        return Err(Error::DegenerateSeries("all lagged values are zero".into()));
    }
    let rho = (num / den).clamp(-MAX_ABS_RHO, MAX_ABS_RHO);
    let ss: f64 = (1..n)
        .map(|t| (anomalies[t] - rho * anomalies[t - 1]).powi(2))
        .sum();
    let sigma = (ss / (n - 1) as f64).sqrt();
    if !(sigma > 0.0) {
        return Err(Error::DegenerateSeries("zero innovation variance".into()));
    }
    Ok(Ar1Params { sigma, rho })
}

/// `n` values of a stationary AR(1) process; deterministic in `seed`.
pub fn ar1_simulate(params: &Ar1Params, n: usize, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    if n == 0 {
        return Err(Error::InvalidInput("cannot simulate zero points".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let mut out = Vec::with_capacity(n);
    simulate_into(params, n, &mut rng, &mut out);
    Ok(out)
}

/// Appends `n` values to `out`, starting from the stationary distribution.
pub(crate) fn simulate_into<R: Rng + ?Sized>(
    params: &Ar1Params,
    n: usize,
    rng: &mut R,
    out: &mut Vec<f64>,
) {
    let z: f64 = rng.sample(StandardNormal);
    let mut x = z * params.stationary_sd();
    out.push(x);
    for _ in 1..n {
        let z: f64 = rng.sample(StandardNormal);
        x = params.rho * x + params.sigma * z;
        out.push(x);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Periodogram {
    /// Cycles per step, `1/n ..= 1/2`.
    pub frequencies: Vec<f64>,
    pub powers: Vec<f64>,
}

/// Periodogram of the mean-removed series at the positive Fourier
/// frequencies, normalized so the powers sum to the variance (`1/n` divisor).
pub fn periodogram(series: &[f64]) -> Result<Periodogram> {
    let n = series.len();
    if n < 8 {
        return Err(Error::InvalidInput(format!(
            "periodogram needs at least 8 points, got {n}"
        )));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    Ok(periodogram_with(series, fft.as_ref()))
}

pub(crate) fn periodogram_with(series: &[f64], fft: &dyn rustfft::Fft<f64>) -> Periodogram {
    let n = series.len();
    let m = stats::mean(series);
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&v| Complex::new(v - m, 0.0)).collect();
    fft.process(&mut buf);
    let nf = n as f64;
    let half = n / 2;
    let mut frequencies = Vec::with_capacity(half);
    let mut powers = Vec::with_capacity(half);
    for (j, c) in buf.iter().enumerate().take(half + 1).skip(1) {
        let fold = if n % 2 == 0 && j == half { 1.0 } else { 2.0 };
        frequencies.push(j as f64 / nf);
        powers.push(fold * c.norm_sqr() / (nf * nf));
    }
    Periodogram {
        frequencies,
        powers,
    }
}

/// Theoretical AR(1) spectrum in the same normalization as [`periodogram`]
/// (density per Fourier ordinate, one-sided).
pub fn ar1_spectrum(params: &Ar1Params, n: usize, frequency: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * frequency;
    let denom = 1.0 + params.rho * params.rho - 2.0 * params.rho * w.cos();
    2.0 * params.sigma * params.sigma / (n as f64 * denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ln_phi(z: f64) -> f64 {
        -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }

    #[test]
    fn loglik_two_gaussian_terms() {
        let p = Ar1Params::new(1.0, 0.5).unwrap();
        let ll = ar1_conditional_loglik(&[0.0, 1.0, 0.0], &p).unwrap();
        // phi(1) = 0.24197..., phi(0.5) = 0.35207...
        let expected = (0.241_970_724_519_143_37f64 * 0.352_065_326_764_299_5).ln();
        assert!((ll - expected).abs() < 1e-12, "{ll} vs {expected}");
    }

    #[test]
    fn loglik_white_noise_reduction() {
        let x = [0.3, -1.2, 0.7, 2.0, -0.1];
        let sigma = 1.7;
        let p = Ar1Params::new(sigma, 0.0).unwrap();
        let direct: f64 = x[1..].iter().map(|v| ln_phi(v / sigma) - sigma.ln()).sum();
        assert!((ar1_conditional_loglik(&x, &p).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn loglik_scale_family() {
        let x = [0.3, -1.2, 0.7, 2.0, -0.1, 0.4];
        let p = Ar1Params::new(0.8, 0.3).unwrap();
        let c: f64 = 3.5;
        let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
        let ps = Ar1Params::new(0.8 * c, 0.3).unwrap();
        let shift = ar1_conditional_loglik(&xs, &ps).unwrap() - ar1_conditional_loglik(&x, &p).unwrap();
        assert!((shift + (x.len() - 1) as f64 * c.ln()).abs() < 1e-10);
    }

    #[test]
    fn loglik_rejects_bad_sigma() {
        let p = Ar1Params { sigma: 0.0, rho: 0.1 };
        assert!(ar1_conditional_loglik(&[1.0, 2.0], &p).is_err());
        assert!(Ar1Params::new(1.0, 1.0).is_err());
        assert!(Ar1Params::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn mle_recovers_truth() {
        let truth = Ar1Params::new(1.0, 0.6).unwrap();
        let x = ar1_simulate(&truth, 10_000, 11).unwrap();
        let est = ar1_mle(&x).unwrap();
        assert!((est.sigma - 1.0).abs() < 0.03, "{est:?}");
        assert!((est.rho - 0.6).abs() < 0.03, "{est:?}");
    }

    #[test]
    fn mle_white_noise() {
        let truth = Ar1Params::new(2.0, 0.0).unwrap();
        let x = ar1_simulate(&truth, 10_000, 5).unwrap();
        let est = ar1_mle(&x).unwrap();
        assert!(est.rho.abs() < 0.03, "{est:?}");
        assert!((est.sigma - 2.0).abs() < 0.05, "{est:?}");
    }

    #[test]
    fn mle_is_stationary_on_explosive_input() {
        let est = ar1_mle(&[0.1, 1.0, 10.0, 100.0, 1000.5]).unwrap();
        assert!(est.rho.abs() < 1.0 && est.sigma > 0.0);
    }

    #[test]
    fn mle_rejects_degenerate() {
        assert!(matches!(ar1_mle(&[3.0; 6]), Err(Error::DegenerateSeries(_))));
        assert!(ar1_mle(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn simulate_white_noise_sd() {
        let x = ar1_simulate(&Ar1Params::new(1.5, 0.0).unwrap(), 100_000, 3).unwrap();
        assert!((stats::std_dev(&x) / 1.5 - 1.0).abs() < 0.01);
    }

    #[test]
    fn simulate_lag1_autocorrelation() {
        let x = ar1_simulate(&Ar1Params::new(1.0, 0.7).unwrap(), 100_000, 9).unwrap();
        let m = stats::mean(&x);
        let c0: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
        let c1: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        assert!((c1 / c0 - 0.7).abs() < 0.01, "{}", c1 / c0);
    }

    #[test]
    fn simulate_is_seeded() {
        let p = Ar1Params::new(1.0, 0.4).unwrap();
        assert_eq!(ar1_simulate(&p, 50, 1).unwrap(), ar1_simulate(&p, 50, 1).unwrap());
        assert_ne!(ar1_simulate(&p, 50, 1).unwrap(), ar1_simulate(&p, 50, 2).unwrap());
    }

    #[test]
    fn periodogram_of_cosine() {
        let n = 64;
        let k = 5;
        let x: Vec<f64> = (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * k as f64 * t as f64 / n as f64).cos())
            .collect();
        let p = periodogram(&x).unwrap();
        assert_eq!(p.frequencies.len(), n / 2);
        let (imax, _) = p
            .powers
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert!((p.frequencies[imax] - k as f64 / n as f64).abs() < 1e-15);
        let total: f64 = p.powers.iter().sum();
        assert!(p.powers[imax] / total > 0.999);
    }

    #[test]
    fn periodogram_parseval() {
        for n in [17, 64, 101] {
            let x = ar1_simulate(&Ar1Params::new(1.0, 0.5).unwrap(), n, n as u64).unwrap();
            let p = periodogram(&x).unwrap();
            let var = stats::variance(&x) * (n - 1) as f64 / n as f64;
            let total: f64 = p.powers.iter().sum();
            assert!((total - var).abs() < 1e-8, "n={n}: {total} vs {var}");
        }
    }

    #[test]
    fn periodogram_white_noise_is_flat() {
        let n = 20_000;
        let x = ar1_simulate(&Ar1Params::new(1.0, 0.0).unwrap(), n, 77).unwrap();
        let p = periodogram(&x).unwrap();
        let bins = 10;
        let per = p.powers.len() / bins;
        let sums: Vec<f64> = (0..bins)
            .map(|b| p.powers[b * per..(b + 1) * per].iter().sum())
            .collect();
        let max = sums.iter().copied().fold(f64::MIN, f64::max);
        let min = sums.iter().copied().fold(f64::MAX, f64::min);
        assert!(max / min < 3.0, "{sums:?}");
    }

    #[test]
    fn theoretical_spectrum_sums_to_variance() {
        // integral of the one-sided spectrum over (0, 1/2] is the process variance
        let p = Ar1Params::new(1.0, 0.6).unwrap();
        let n = 4096;
        let total: f64 = (1..=n / 2).map(|j| ar1_spectrum(&p, n, j as f64 / n as f64)).sum();
        let var = p.stationary_sd().powi(2);
        assert!((total / var - 1.0).abs() < 1e-2);
    }
}
