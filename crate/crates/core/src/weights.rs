use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the unit-sum invariant.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Per-model probabilities summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Wraps already-normalized weights, checking the invariants.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("empty weight vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput(format!("weights must be finite and nonnegative: {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    /// Scales nonnegative values to unit sum.
    pub fn normalize(raw: &[f64]) -> Result<Self> {
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput(format!("cannot normalize {raw:?}")));
        }
        let sum: f64 = raw.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::NumericalDegeneracy("all weights are zero".into()));
        }
        Ok(Self(raw.iter().map(|w| w / sum).collect()))
    }

    /// Softmax of log-weights; `-inf` entries get weight zero.
    pub fn from_log(log_weights: &[f64]) -> Result<Self> {
        if log_weights.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::NumericalDegeneracy(format!("invalid log-weights {log_weights:?}")));
        }
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::NumericalDegeneracy("every marginal likelihood underflowed".into()));
        }
        let raw: Vec<f64> = log_weights.iter().map(|v| (v - max).exp()).collect();
        Self::normalize(&raw)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest weight (first on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, w) in self.0.iter().enumerate() {
            if *w > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Drops entry `i` and renormalizes the rest.
    pub fn exclude(&self, i: usize) -> Result<Self> {
        let rest: Vec<f64> = self
            .0
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, w)| *w)
            .collect();
        Self::normalize(&rest)
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_log_survives_underflow() {
        let w = WeightVector::from_log(&[-2000.0, -2001.0, f64::NEG_INFINITY]).unwrap();
        assert!((w[0] - 1.0 / (1.0 + (-1f64).exp())).abs() < 1e-12);
        assert_eq!(w[2], 0.0);
        assert!(WeightVector::from_log(&[f64::NEG_INFINITY; 2]).is_err());
    }

    #[test]
    fn exclusion_preserves_ratios() {
        let w = WeightVector::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let r = w.exclude(2).unwrap();
        assert_eq!(r.len(), 3);
        assert!((r[1] / r[0] - 2.0).abs() < 1e-12);
        assert!((r[2] / r[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![1.5, -0.5]).is_err());
    }
}
