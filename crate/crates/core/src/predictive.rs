use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};

/// Per-point marginal predictive moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub latent_mean: Vec<f64>,
    pub latent_variance: Vec<f64>,
    /// Latent variance plus the observation noise τ².
    pub noisy_variance: Vec<f64>,
    /// How many latent variances came out negative and were clamped to zero.
    pub clamped: usize,
}

impl PredictiveDistribution {
    /// Builds the distribution, clamping round-off negatives in the latent variance.
    pub fn from_latent(latent_mean: Vec<f64>, mut latent_variance: Vec<f64>, noise_variance: f64) -> Self {
        let mut clamped = 0;
        for v in latent_variance.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
                clamped += 1;
            }
        }
        let noisy_variance = latent_variance.iter().map(|v| v + noise_variance).collect();
        Self {
            latent_mean,
            latent_variance,
            noisy_variance,
            clamped,
        }
    }

    pub fn len(&self) -> usize {
        self.latent_mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latent_mean.is_empty()
    }

    /// Maps moments from standardized target units back to the original
    /// scale: means become `mean·scale + shift`, variances `var·scale²`.
    pub fn unstandardize(&self, shift: f64, scale: f64) -> Self {
        let s2 = scale * scale;
        Self {
            latent_mean: self.latent_mean.iter().map(|m| m * scale + shift).collect(),
            latent_variance: self.latent_variance.iter().map(|v| v * s2).collect(),
            noisy_variance: self.noisy_variance.iter().map(|v| v * s2).collect(),
            clamped: self.clamped,
        }
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        check_dim(self.len(), n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_negative_variances() {
        let p = PredictiveDistribution::from_latent(vec![0.0, 1.0], vec![-1e-17, 0.5], 0.1);
        assert_eq!(p.latent_variance, vec![0.0, 0.5]);
        assert_eq!(p.noisy_variance, vec![0.1, 0.6]);
        assert_eq!(p.clamped, 1);
    }

    #[test]
    fn unstandardize_round_trip() {
        let p = PredictiveDistribution::from_latent(vec![-0.5, 2.0], vec![0.25, 1.0], 0.5);
        let q = p.unstandardize(10.0, 3.0);
        assert_eq!(q.latent_mean, vec![8.5, 16.0]);
        assert_eq!(q.latent_variance, vec![2.25, 9.0]);
        assert_eq!(q.noisy_variance, vec![6.75, 13.5]);
        let back = q.unstandardize(-10.0 / 3.0, 1.0 / 3.0);
        for (a, b) in back.latent_mean.iter().zip(&p.latent_mean) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
