//! Exact Gaussian process regression.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, GpError, Result};
use crate::kernel::{cov_matrix, cov_symmetric, sq_dist, InputMatrix, KernelParams, N_PARAMS};
use crate::linalg::{cholesky, log_det, solve_lower, Chol};
use crate::predictive::PredictiveDistribution;

/// A fitted exact GP. Immutable after construction.
#[derive(Clone, Debug)]
pub struct FullGpModel {
    params: KernelParams,
    inputs: InputMatrix,
    targets: Vec<f64>,
    mean_constant: f64,
    chol: Chol,
    /// `(Σ + (τ² + jitter)I)⁻¹ (y − m)`
    alpha: DVector<f64>,
}

impl FullGpModel {
    /// Fits with a zero mean function.
    pub fn fit(inputs: &InputMatrix, targets: &[f64], params: KernelParams) -> Result<Self> {
        Self::fit_with_mean(inputs, targets, params, 0.0)
    }

    pub fn fit_with_mean(
        inputs: &InputMatrix,
        targets: &[f64],
        params: KernelParams,
        mean_constant: f64,
    ) -> Result<Self> {
        params.validate()?;
        check_dim(inputs.nrows(), targets.len())?;
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(GpError::NonFinite("training targets".into()));
        }
        let mut k = cov_symmetric(inputs, &params);
        let diag = params.noise_variance + params.latent_jitter;
        for i in 0..k.nrows() {
            k[(i, i)] += diag;
        }
        let chol = cholesky(k, "training covariance", params.latent_jitter)?;
        let resid = DVector::from_iterator(targets.len(), targets.iter().map(|y| y - mean_constant));
        let alpha = chol.solve(&resid);
        Ok(Self {
            params,
            inputs: inputs.clone(),
            targets: targets.to_vec(),
            mean_constant,
            chol,
            alpha,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn mean_constant(&self) -> f64 {
        self.mean_constant
    }

    pub fn inputs(&self) -> &InputMatrix {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Lower Cholesky factor of `Σ + (τ² + jitter)I`.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.targets.len() as f64;
        let resid = self.targets.iter().map(|y| y - self.mean_constant);
        let quad: f64 = resid.zip(self.alpha.iter()).map(|(r, a)| r * a).sum();
        -0.5 * quad - 0.5 * log_det(&self.chol) - 0.5 * n * (2.0 * PI).ln()
    }

    /// Gradient of the log marginal likelihood over (log σ², log ℓ, log τ²).
    pub fn log_marginal_likelihood_grad(&self) -> [f64; N_PARAMS] {
        let n = self.targets.len();
        // W = ααᵀ − K⁻¹; dL = ½ tr(W dK)
        let mut w = self.chol.inverse();
        w.neg_mut();
        w.ger(1.0, &self.alpha, &self.alpha, 1.0);

        let p = &self.params;
        let inv_l2 = 1.0 / (p.lengthscale * p.lengthscale);
        let mut g_sv = 0.0;
        let mut g_ls = 0.0;
        for j in 0..n {
            g_sv += w[(j, j)] * p.latent_prior_variance();
            for i in (j + 1)..n {
                let sq = sq_dist(self.inputs.point(i), self.inputs.point(j));
                let k = p.signal_variance * (-0.5 * sq * inv_l2).exp();
                // off-diagonal entries appear twice
                g_sv += 2.0 * w[(i, j)] * k;
                g_ls += 2.0 * w[(i, j)] * k * sq * inv_l2;
            }
        }
        let g_noise = p.noise_variance * w.trace();
        [0.5 * g_sv, 0.5 * g_ls, 0.5 * g_noise]
    }

    pub fn predict(&self, test: &InputMatrix) -> Result<PredictiveDistribution> {
        check_dim(self.inputs.dim(), test.dim())?;
        let k_xt = cov_matrix(&self.inputs, test, &self.params)?;
        let mean = k_xt.tr_mul(&self.alpha).add_scalar(self.mean_constant);
        let v = solve_lower(&self.chol, &k_xt);
        let prior = self.params.latent_prior_variance();
        let var: Vec<f64> = v.column_iter().map(|c| prior - c.norm_squared()).collect();
        Ok(PredictiveDistribution::from_latent(
            mean.iter().copied().collect(),
            var,
            self.params.noise_variance,
        ))
    }
}
