use serde::{Deserialize, Serialize};

use super::prf::GVector;
use crate::error::{Error, Result};

/// Linearly decaying layer weights `w_i = 2(d+1-i)/(d+1)`, summing to `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthWeights {
    weights: Vec<f64>,
}

impl DepthWeights {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::ZeroDepth);
        }
        let denom = (d + 1) as f64;
        let weights = (1..=d).map(|i| 2.0 * (d + 1 - i) as f64 / denom).collect();
        Ok(Self { weights })
    }

    /// Arbitrary nonnegative weights; used for the unweighted comparator.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::ZeroDepth);
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig("weights must be finite and nonnegative".into()));
        }
        Ok(Self { weights })
    }

    pub fn uniform(d: usize) -> Result<Self> {
        Self::from_weights(vec![1.0; d])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn d(&self) -> usize {
        self.weights.len()
    }

    /// `d^2 / sum(w_i^2)`.
    pub fn effective_depth(&self) -> f64 {
        let d = self.d() as f64;
        let sum_sq: f64 = self.weights.iter().map(|w| w * w).sum();
        d * d / sum_sq
    }

    pub fn weighted_g(&self, gv: &GVector) -> Result<f64> {
        if gv.d() != self.d() {
            return Err(Error::DepthMismatch {
                gvector: gv.d(),
                weights: self.d(),
            });
        }
        let total: f64 = self
            .weights
            .iter()
            .zip(gv.bits())
            .filter(|(_, &b)| b == 1)
            .map(|(w, _)| w)
            .sum();
        Ok(total / self.d() as f64)
    }
}

pub fn depth_weights(d: usize) -> Result<DepthWeights> {
    DepthWeights::new(d)
}

pub fn effective_depth(weights: &DepthWeights) -> f64 {
    weights.effective_depth()
}

pub fn weighted_g(gv: &GVector, weights: &DepthWeights) -> Result<f64> {
    weights.weighted_g(gv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wm::{derive_seed, g_vector, SeedContext, WatermarkKey};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn canonical_weights() {
        assert_eq!(depth_weights(1).unwrap().weights(), &[1.0]);
        let w3 = depth_weights(3).unwrap();
        assert!(w3.weights().iter().zip([1.5, 1.0, 0.5]).all(|(a, b)| close(*a, b)));
        let w2 = depth_weights(2).unwrap();
        assert!(close(w2.weights()[0], 4.0 / 3.0) && close(w2.weights()[1], 2.0 / 3.0));
        assert!(matches!(depth_weights(0), Err(Error::ZeroDepth)));
    }

    #[test]
    fn weight_identities() {
        for d in 1..=64usize {
            let w = depth_weights(d).unwrap();
            let sum: f64 = w.weights().iter().sum();
            assert!(close(sum, d as f64), "d={d} sum={sum}");
            assert!(w.weights().windows(2).all(|p| p[0] > p[1]));
            let df = d as f64;
            let expected = 3.0 * df * (df + 1.0) / (2.0 * (2.0 * df + 1.0));
            assert!(close(effective_depth(&w), expected), "d={d}");
        }
    }

    #[test]
    fn effective_depth_examples() {
        assert!(close(effective_depth(&depth_weights(1).unwrap()), 1.0));
        assert!(close(effective_depth(&depth_weights(3).unwrap()), 9.0 / 3.5));
        assert!(close(effective_depth(&DepthWeights::uniform(7).unwrap()), 7.0));
    }

    #[test]
    fn weighted_g_examples() {
        let w = depth_weights(3).unwrap();
        let gv = GVector::from_bits(vec![1, 0, 1]).unwrap();
        assert!(close(weighted_g(&gv, &w).unwrap(), 2.0 / 3.0));
        for d in 1..10 {
            let w = depth_weights(d).unwrap();
            let ones = GVector::from_bits(vec![1; d]).unwrap();
            let zeros = GVector::from_bits(vec![0; d]).unwrap();
            assert!(close(weighted_g(&ones, &w).unwrap(), 1.0));
            assert_eq!(weighted_g(&zeros, &w).unwrap(), 0.0);
        }
        let gv4 = GVector::from_bits(vec![1, 0, 0, 1]).unwrap();
        assert!(matches!(
            weighted_g(&gv4, &w),
            Err(Error::DepthMismatch { gvector: 4, weights: 3 })
        ));
    }

    #[test]
    fn null_mean_of_weighted_score_is_half() {
        // Per-sample variance is sum(w^2)/(4 d^2); band is 4 sigma of the mean.
        let d = 4;
        let w = depth_weights(d).unwrap();
        let n = 100_000;
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let ctx = SeedContext::new(vec![3, 1, 4, 1]).unwrap();
        let mut sum = 0.0;
        for _ in 0..n {
            let key = WatermarkKey::generate(&mut rng, "k").unwrap();
            let gv = g_vector(derive_seed(&key, &ctx, 0), 99, d).unwrap();
            sum += weighted_g(&gv, &w).unwrap();
        }
        let mean = sum / n as f64;
        let sum_sq: f64 = w.weights().iter().map(|x| x * x).sum();
        let sigma = (sum_sq / (4.0 * (d * d) as f64) / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 4.0 * sigma, "mean {mean} sigma {sigma}");
    }
}
