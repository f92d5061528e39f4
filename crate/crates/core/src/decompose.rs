//! Trend/anomaly decomposition of raw series.
//!
//! Trends come from either a Theil–Sen line or Cleveland's robust locally
//! weighted regression. The time axis is rescaled to unit steps, so slopes
//! are per step of the input axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmootherKind {
    TheilSen,
    Lowess,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherSpec {
    pub kind: SmootherKind,
    /// Fraction of points in each local fit (lowess only).
    #[serde(default = "default_span")]
    pub span: f64,
    /// Robustness iterations (lowess only).
    #[serde(default = "default_iterations")]
    pub iterations: usize,
}

fn default_span() -> f64 {
    0.8
}

fn default_iterations() -> usize {
    3
}

impl SmootherSpec {
    pub fn theil_sen() -> Self {
        Self {
            kind: SmootherKind::TheilSen,
            span: default_span(),
            iterations: default_iterations(),
        }
    }

    pub fn lowess(span: f64) -> Self {
        Self {
            kind: SmootherKind::Lowess,
            span,
            iterations: default_iterations(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == SmootherKind::Lowess {
            if !(self.span > 0.0 && self.span <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "lowess span {} outside (0, 1]",
                    self.span
                )));
            }
            if self.iterations == 0 {
                return Err(Error::InvalidConfig(
                    "lowess needs at least one robustness iteration".into(),
                ));
            }
        }
        Ok(())
    }
}

impl Default for SmootherSpec {
    fn default() -> Self {
        Self::theil_sen()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionMode {
    #[default]
    Absolute,
    /// Anomalies divided by the raw series mean.
    Relative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub trend: Vec<f64>,
    pub anomalies: Vec<f64>,
    pub mode: DecompositionMode,
    /// Raw sample mean; set only in relative mode.
    pub series_mean: Option<f64>,
}

impl Decomposition {
    /// Reassembles the raw series.
    pub fn reconstruct(&self) -> Vec<f64> {
        let scale = self.series_mean.unwrap_or(1.0);
        self.trend
            .iter()
            .zip(&self.anomalies)
            .map(|(t, a)| t + scale * a)
            .collect()
    }

    /// Anomalies in the units of the series, whatever the mode.
    pub fn absolute_anomalies(&self) -> Vec<f64> {
        let scale = self.series_mean.unwrap_or(1.0);
        self.anomalies.iter().map(|a| scale * a).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheilSenFit {
    /// Slope per time step.
    pub slope: f64,
    /// Fitted value at the first time point.
    pub intercept: f64,
    /// Step of the original axis, for converting the slope to time units.
    pub step: i64,
}

impl TheilSenFit {
    pub fn slope_per_time_unit(&self) -> f64 {
        self.slope / self.step as f64
    }

    pub fn fitted(&self, n: usize) -> Vec<f64> {
        (0..n).map(|i| self.intercept + self.slope * i as f64).collect()
    }
}

/// Median of all pairwise slopes; intercept is the median of `v_i - slope * i`.
pub fn theil_sen(series: &TimeSeries) -> Result<TheilSenFit> {
    let v = series.values();
    let n = v.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "Theil-Sen needs at least 2 points, got {n}"
        )));
    }
    let mut slopes = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            slopes.push((v[j] - v[i]) / (j - i) as f64);
        }
    }
    let slope = stats::median_in_place(&mut slopes);
    let mut offsets: Vec<f64> = v.iter().enumerate().map(|(i, y)| y - slope * i as f64).collect();
    let intercept = stats::median_in_place(&mut offsets);
    Ok(TheilSenFit {
        slope,
        intercept,
        step: series.step(),
    })
}

/// Robust locally weighted linear regression evaluated at every input time.
///
/// Tricube neighbourhood weights over the `span * n` nearest points and
/// bisquare robustness weights from `6 * median(|residual|)`; no
/// interpolation shortcut between fitted points.
pub fn lowess(series: &TimeSeries, spec: &SmootherSpec) -> Result<Vec<f64>> {
    if spec.kind != SmootherKind::Lowess {
        return Err(Error::InvalidConfig("smoother is not lowess".into()));
    }
    spec.validate()?;
    let n = series.len();
    if n < 5 {
        return Err(Error::InvalidInput(format!(
            "lowess needs at least 5 points, got {n}"
        )));
    }
    if spec.span * (n as f64) < 2.0 {
        return Err(Error::InvalidConfig(format!(
            "span {} leaves fewer than 2 neighbours for {n} points",
            spec.span
        )));
    }
    let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
    Ok(clowess(&x, series.values(), spec.span, spec.iterations))
}

fn clowess(x: &[f64], y: &[f64], span: f64, iterations: usize) -> Vec<f64> {
    let n = x.len();
    let ns = ((span * n as f64 + 1e-7) as usize).clamp(2, n);
    let mut fitted = vec![0.0; n];
    let mut robustness = vec![1.0; n];
    let mut weights = vec![0.0; n];
    let mut residuals = vec![0.0; n];

    for iter in 0..=iterations {
        let mut left = 0;
        let mut right = ns - 1;
        for i in 0..n {
            while right < n - 1 && x[i] - x[left] > x[right + 1] - x[i] {
                left += 1;
                right += 1;
            }
            let robust = (iter > 0).then_some(robustness.as_slice());
            fitted[i] = local_fit(x, y, x[i], left, right, &mut weights, robust).unwrap_or(y[i]);
        }
        if iter == iterations {
            break;
        }
        for i in 0..n {
            residuals[i] = y[i] - fitted[i];
        }
        let scale = residuals.iter().map(|r| r.abs()).sum::<f64>() / n as f64;
        let mut abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
        let cmad = 6.0 * stats::median_in_place(&mut abs);
        if cmad < 1e-7 * scale {
            break;
        }
        let (c9, c1) = (0.999 * cmad, 0.001 * cmad);
        for (w, r) in robustness.iter_mut().zip(&residuals) {
            let r = r.abs();
            *w = if r <= c1 {
                1.0
            } else if r <= c9 {
                let u = r / cmad;
                (1.0 - u * u).powi(2)
            } else {
                0.0
            };
        }
    }
    fitted
}

/// Weighted local linear fit at `xs` over `x[left..=right]` (extended right
/// across ties at the boundary distance). `None` if all weights vanish.
fn local_fit(
    x: &[f64],
    y: &[f64],
    xs: f64,
    left: usize,
    right: usize,
    w: &mut [f64],
    robustness: Option<&[f64]>,
) -> Option<f64> {
    let n = x.len();
    let range = x[n - 1] - x[0];
    let h = (xs - x[left]).max(x[right] - xs);
    let (h9, h1) = (0.999 * h, 0.001 * h);

    let mut total = 0.0;
    let mut j = left;
    while j < n {
        w[j] = 0.0;
        let r = (x[j] - xs).abs();
        if r <= h9 {
            let mut wj = if r <= h1 {
                1.0
            } else {
                let u = r / h;
                (1.0 - u * u * u).powi(3)
            };
            if let Some(rw) = robustness {
                wj *= rw[j];
            }
            w[j] = wj;
            total += wj;
        } else if x[j] > xs {
            break;
        }
        j += 1;
    }
    let last = j - 1;
    if total <= 0.0 {
        return None;
    }
    for wj in &mut w[left..=last] {
        *wj /= total;
    }
    if h > 0.0 {
        let centre: f64 = (left..=last).map(|j| w[j] * x[j]).sum();
        let spread: f64 = (left..=last).map(|j| w[j] * (x[j] - centre).powi(2)).sum();
        if spread.sqrt() > 0.001 * range {
            let b = (xs - centre) / spread;
            for j in left..=last {
                w[j] *= b * (x[j] - centre) + 1.0;
            }
        }
    }
    Some((left..=last).map(|j| w[j] * y[j]).sum())
}

/// Trend vector for `series` under `spec`.
pub fn fit_trend(series: &TimeSeries, spec: &SmootherSpec) -> Result<Vec<f64>> {
    match spec.kind {
        SmootherKind::TheilSen => Ok(theil_sen(series)?.fitted(series.len())),
        SmootherKind::Lowess => lowess(series, spec),
    }
}

pub fn decompose(
    series: &TimeSeries,
    spec: &SmootherSpec,
    mode: DecompositionMode,
) -> Result<Decomposition> {
    let trend = fit_trend(series, spec)?;
    decompose_with_trend(series, trend, mode)
}

/// Decomposition against a caller-supplied trend.
pub fn decompose_with_trend(
    series: &TimeSeries,
    trend: Vec<f64>,
    mode: DecompositionMode,
) -> Result<Decomposition> {
    let values = series.values();
    if trend.len() != values.len() {
        return Err(Error::InvalidInput(format!(
            "trend length {} != series length {}",
            trend.len(),
            values.len()
        )));
    }
    let residual = values.iter().zip(&trend).map(|(v, t)| v - t);
    match mode {
        DecompositionMode::Absolute => Ok(Decomposition {
            anomalies: residual.collect(),
            trend,
            mode,
            series_mean: None,
        }),
        DecompositionMode::Relative => {
            let mean = stats::mean(values);
            let sd = stats::std_dev(values);
            if mean == 0.0 || mean.abs() < 1e-8 * sd {
                return Err(Error::DegenerateNormalization { mean, sd });
            }
            let anomalies = residual.map(|r| r / mean).collect();
            Ok(Decomposition {
                anomalies,
                trend,
                mode,
                series_mean: Some(mean),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(values: &[f64]) -> TimeSeries {
        TimeSeries::from_values(0, values.to_vec()).unwrap()
    }

    #[test]
    fn theil_sen_exact_line() {
        let fit = theil_sen(&ts(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(fit.slope, 1.0);
        assert_eq!(fit.intercept, 1.0);
    }

    #[test]
    fn theil_sen_constant() {
        let fit = theil_sen(&ts(&[5.0; 4])).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert_eq!(fit.intercept, 5.0);
    }

    #[test]
    fn theil_sen_even_slope_count() {
        // pairwise slopes {3, 0.5, 4/3, -2, 0.5, 3}; central pair 0.5 and 4/3
        let fit = theil_sen(&ts(&[0.0, 3.0, 1.0, 4.0])).unwrap();
        assert!((fit.slope - (0.5 + 4.0 / 3.0) / 2.0).abs() < 1e-15);
        assert!((fit.slope - 0.916_666_666_666_666_6).abs() < 1e-12);
    }

    #[test]
    fn theil_sen_needs_two_points() {
        assert!(theil_sen(&ts(&[1.0])).is_err());
    }

    #[test]
    fn theil_sen_slope_in_time_units() {
        let s = TimeSeries::new(vec![0, 5, 10], vec![0.0, 1.0, 2.0]).unwrap();
        let fit = theil_sen(&s).unwrap();
        assert_eq!(fit.slope, 1.0);
        assert!((fit.slope_per_time_unit() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn lowess_reproduces_line() {
        let values: Vec<f64> = (0..40).map(|i| 3.0 - 0.25 * i as f64).collect();
        for span in [0.2, 0.5, 0.8, 1.0] {
            let fit = lowess(&ts(&values), &SmootherSpec::lowess(span)).unwrap();
            assert_eq!(fit.len(), values.len());
            for (a, b) in fit.iter().zip(&values) {
                assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn lowess_rejects_tiny_span() {
        let values: Vec<f64> = (0..10).map(f64::from).collect();
        let err = lowess(&ts(&values), &SmootherSpec::lowess(0.1)).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        assert!(lowess(&ts(&values[..4]), &SmootherSpec::lowess(0.8)).is_err());
    }

    #[test]
    fn linear_series_has_zero_anomalies() {
        let values: Vec<f64> = (0..12).map(|i| 2.0 * i as f64 - 1.0).collect();
        let d = decompose(&ts(&values), &SmootherSpec::theil_sen(), DecompositionMode::Absolute)
            .unwrap();
        assert!(d.anomalies.iter().all(|a| a.abs() < 1e-12));
    }

    #[test]
    fn relative_anomalies_scale_by_mean() {
        let d = decompose_with_trend(
            &ts(&[10.0, 12.0, 8.0, 10.0]),
            vec![10.0; 4],
            DecompositionMode::Relative,
        )
        .unwrap();
        assert_eq!(d.series_mean, Some(10.0));
        let expected = [0.0, 0.2, -0.2, 0.0];
        for (a, e) in d.anomalies.iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn relative_mode_rejects_zero_mean() {
        let err = decompose(
            &ts(&[-1.0, 1.0, -1.0, 1.0]),
            &SmootherSpec::theil_sen(),
            DecompositionMode::Relative,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateNormalization { .. }));
        assert!(decompose(&ts(&[0.0; 5]), &SmootherSpec::theil_sen(), DecompositionMode::Relative)
            .is_err());
    }
}
