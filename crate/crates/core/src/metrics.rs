//! Predictive accuracy metrics.
//!
//! MNLP scores the noisy-target density; AUKL compares latent densities.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, GpError, Result};
use crate::predictive::PredictiveDistribution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mnlp: f64,
    pub srmse: f64,
    pub aukl: Option<f64>,
    pub log10_aukl: Option<f64>,
    pub train_seconds: f64,
    pub knot_count: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median negative log predictive density of the test targets.
pub fn mnlp(pred: &PredictiveDistribution, targets: &[f64]) -> Result<f64> {
    pred.check_len(targets.len())?;
    if targets.is_empty() {
        return Err(GpError::InvalidArgument("no test targets".into()));
    }
    let mut nlp = Vec::with_capacity(targets.len());
    for (i, ((y, m), v)) in targets
        .iter()
        .zip(&pred.latent_mean)
        .zip(&pred.noisy_variance)
        .enumerate()
    {
        if !(*v > 0.0) {
            return Err(GpError::InvalidArgument(format!("zero predictive variance at test point {i}")));
        }
        nlp.push(0.5 * ((2.0 * PI * v).ln() + (y - m) * (y - m) / v));
    }
    Ok(median(nlp))
}

/// Test RMSE of the predictive means over the test-set sample standard
/// deviation (N − 1 denominator).
pub fn srmse(pred: &PredictiveDistribution, targets: &[f64]) -> Result<f64> {
    pred.check_len(targets.len())?;
    let n = targets.len();
    if n < 2 {
        return Err(GpError::InvalidArgument("SRMSE needs at least two test points".into()));
    }
    let mean = targets.iter().sum::<f64>() / n as f64;
    let var = targets.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1) as f64;
    if var <= 0.0 {
        return Err(GpError::InvalidArgument("test targets are constant".into()));
    }
    let mse = targets
        .iter()
        .zip(&pred.latent_mean)
        .map(|(y, m)| (m - y) * (m - y))
        .sum::<f64>()
        / n as f64;
    Ok((mse / var).sqrt())
}

/// `KL(N(mean1, var1) ‖ N(mean2, var2))`.
pub fn gaussian_kl(mean1: f64, var1: f64, mean2: f64, var2: f64) -> Result<f64> {
    if !(var1 > 0.0 && var2 > 0.0) {
        return Err(GpError::InvalidArgument(format!(
            "KL needs positive variances, got {var1} and {var2}"
        )));
    }
    let d = mean1 - mean2;
    let kl = 0.5 * (var2 / var1).ln() + (var1 + d * d) / (2.0 * var2) - 0.5;
    Ok(kl.max(0.0))
}

/// Average over test points of the KL divergence from the full GP's latent
/// predictive density to the sparse model's.
pub fn aukl(full: &PredictiveDistribution, sparse: &PredictiveDistribution) -> Result<f64> {
    full.check_len(sparse.len())?;
    check_dim(full.len(), sparse.len())?;
    if full.is_empty() {
        return Err(GpError::InvalidArgument("no test points".into()));
    }
    let mut total = 0.0;
    for i in 0..full.len() {
        total += gaussian_kl(
            full.latent_mean[i],
            full.latent_variance[i],
            sparse.latent_mean[i],
            sparse.latent_variance[i],
        )?;
    }
    Ok(total / full.len() as f64)
}
