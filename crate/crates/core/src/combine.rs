//! Combination of trend and variability weights under independence.

use crate::error::{Error, Result};
use crate::weights::WeightVector;

/// `w_i ∝ trend_i * var_i`, renormalized.
pub fn combine_weights(trend: &WeightVector, var: &WeightVector) -> Result<WeightVector> {
    if trend.len() != var.len() {
        return Err(Error::InvalidInput(format!(
            "trend weights have {} entries, variability weights {}",
            trend.len(),
            var.len()
        )));
    }
    let product: Vec<f64> = trend
        .as_slice()
        .iter()
        .zip(var.as_slice())
        .map(|(a, b)| a * b)
        .collect();
    if product.iter().all(|p| *p == 0.0) {
        return Err(Error::NumericalDegeneracy(
            "trend and variability weights have disjoint support".into(),
        ));
    }
    WeightVector::normalize(&product)
}

/// The trend-only baseline: variability weights are all equal, so the
/// combined weights are the trend weights themselves.
pub fn trend_only_weights(trend: &WeightVector) -> WeightVector {
    trend.clone()
}

/// Log-space combination, for callers holding unnormalized log marginals.
pub fn combine_log(trend: &[f64], var: &[f64]) -> Vec<f64> {
    trend.iter().zip(var).map(|(a, b)| a + b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wv(v: &[f64]) -> WeightVector {
        WeightVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn uniform_variability_returns_trend() {
        let t = wv(&[0.2, 0.5, 0.3]);
        let c = combine_weights(&t, &WeightVector::uniform(3)).unwrap();
        for (a, b) in c.as_slice().iter().zip(t.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_trend_returns_variability() {
        let v = wv(&[0.6, 0.1, 0.3]);
        let c = combine_weights(&WeightVector::uniform(3), &v).unwrap();
        for (a, b) in c.as_slice().iter().zip(v.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_product() {
        // (0.5, 0.5, 0) x (0.1, 0.4, 0.5) = (0.05, 0.2, 0), normalized by 0.25
        let c = combine_weights(&wv(&[0.5, 0.5, 0.0]), &wv(&[0.1, 0.4, 0.5])).unwrap();
        let expected = [0.2, 0.8, 0.0];
        for (a, b) in c.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn disjoint_support_is_an_error() {
        assert!(matches!(
            combine_weights(&wv(&[1.0, 0.0]), &wv(&[0.0, 1.0])),
            Err(Error::NumericalDegeneracy(_))
        ));
    }

    #[test]
    fn trend_only_is_identity() {
        for t in [wv(&[1.0, 0.0]), WeightVector::uniform(4), wv(&[0.3, 0.7])] {
            assert_eq!(trend_only_weights(&t), t);
        }
    }
}
