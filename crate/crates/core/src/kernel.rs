//! Squared exponential covariance function.
//!
//! `k(a, b) = σ² exp(-‖a − b‖² / (2ℓ²))` with a single isotropic lengthscale.
//! Positive parameters are optimized on the log scale; the latent jitter is
//! carried as a fixed fraction of the signal variance so it follows σ² when
//! the optimizer moves it.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, GpError, Result};

/// Number of unconstrained covariance parameters: (log σ², log ℓ, log τ²).
pub const N_PARAMS: usize = 3;

/// Dense row-major matrix of input locations, one point per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl InputMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(GpError::InvalidArgument(format!(
                "input matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        check_dim(rows * cols, data.len())?;
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(GpError::NonFinite(format!(
                "input entry at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(GpError::InvalidArgument("no rows supplied".into()));
        };
        let cols = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim(cols, r.as_ref().len())?;
            data.extend_from_slice(r.as_ref());
        }
        Self::new(rows.len(), cols, data)
    }

    /// A single-column matrix from a slice of scalars.
    pub fn column(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.cols
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn point_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn push(&mut self, point: &[f64]) -> Result<()> {
        check_dim(self.cols, point.len())?;
        if point.iter().any(|v| !v.is_finite()) {
            return Err(GpError::NonFinite("appended point".into()));
        }
        self.data.extend_from_slice(point);
        self.rows += 1;
        Ok(())
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(GpError::IndexOutOfRange { index: i, len: self.rows });
            }
            data.extend_from_slice(self.point(i));
        }
        Self::new(indices.len(), self.cols, data)
    }

    /// Row-wise concatenation.
    pub fn stack(&self, other: &InputMatrix) -> Result<Self> {
        check_dim(self.cols, other.cols)?;
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Self::new(self.rows + other.rows, self.cols, data)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// σ², in squared target units.
    pub signal_variance: f64,
    /// ℓ, in standardized input units.
    pub lengthscale: f64,
    /// τ², observation noise variance.
    pub noise_variance: f64,
    /// Nugget added to the latent covariance diagonal.
    pub latent_jitter: f64,
}

impl KernelParams {
    /// Latent jitter as a fraction of σ² when none is given explicitly.
    pub const DEFAULT_JITTER_RATIO: f64 = 1e-6;

    pub fn new(signal_variance: f64, lengthscale: f64, noise_variance: f64) -> Result<Self> {
        let p = Self {
            signal_variance,
            lengthscale,
            noise_variance,
            latent_jitter: Self::DEFAULT_JITTER_RATIO * signal_variance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_jitter(mut self, latent_jitter: f64) -> Result<Self> {
        self.latent_jitter = latent_jitter;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("signal_variance", self.signal_variance),
            ("lengthscale", self.lengthscale),
            ("noise_variance", self.noise_variance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(GpError::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.latent_jitter.is_finite() && self.latent_jitter >= 0.0) {
            return Err(GpError::InvalidArgument(format!(
                "latent_jitter must be nonnegative, got {}",
                self.latent_jitter
            )));
        }
        Ok(())
    }

    pub fn jitter_ratio(&self) -> f64 {
        self.latent_jitter / self.signal_variance
    }

    /// Prior variance of the latent function at any single input, nugget included.
    pub fn latent_prior_variance(&self) -> f64 {
        self.signal_variance + self.latent_jitter
    }

    pub fn log_vector(&self) -> [f64; N_PARAMS] {
        [
            self.signal_variance.ln(),
            self.lengthscale.ln(),
            self.noise_variance.ln(),
        ]
    }

    /// Rebuilds parameters from (log σ², log ℓ, log τ²), keeping the jitter
    /// ratio of `self`.
    pub fn with_log_vector(&self, v: &[f64]) -> Result<Self> {
        check_dim(N_PARAMS, v.len())?;
        let signal_variance = v[0].exp();
        let p = Self {
            signal_variance,
            lengthscale: v[1].exp(),
            noise_variance: v[2].exp(),
            latent_jitter: self.jitter_ratio() * signal_variance,
        };
        p.validate()?;
        Ok(p)
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn se(sq: f64, params: &KernelParams) -> f64 {
    params.signal_variance * (-0.5 * sq / (params.lengthscale * params.lengthscale)).exp()
}

pub fn kernel_eval(a: &[f64], b: &[f64], params: &KernelParams) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    Ok(se(sq_dist(a, b), params))
}

/// Covariance matrix between the rows of `a` and the rows of `b` (no jitter).
pub fn cov_matrix(a: &InputMatrix, b: &InputMatrix, params: &KernelParams) -> Result<DMatrix<f64>> {
    check_dim(a.dim(), b.dim())?;
    Ok(DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        se(sq_dist(a.point(i), b.point(j)), params)
    }))
}

/// Symmetric covariance of `a` with itself; identical to `cov_matrix(a, a)`
/// but evaluates each pair once.
pub fn cov_symmetric(a: &InputMatrix, params: &KernelParams) -> DMatrix<f64> {
    let n = a.nrows();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = params.signal_variance;
        for i in (j + 1)..n {
            let v = se(sq_dist(a.point(i), a.point(j)), params);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Derivatives of `k(a, b)` with respect to (log σ², log ℓ).
pub fn kernel_grad_params(a: &[f64], b: &[f64], params: &KernelParams) -> Result<[f64; 2]> {
    check_dim(a.len(), b.len())?;
    let sq = sq_dist(a, b);
    let k = se(sq, params);
    Ok([k, k * sq / (params.lengthscale * params.lengthscale)])
}

/// Derivative of `k(a, knot)` with respect to each coordinate of `knot`.
pub fn kernel_grad_knot(a: &[f64], knot: &[f64], params: &KernelParams) -> Result<Vec<f64>> {
    check_dim(a.len(), knot.len())?;
    let k = se(sq_dist(a, knot), params);
    let inv_l2 = 1.0 / (params.lengthscale * params.lengthscale);
    Ok(a.iter().zip(knot).map(|(ai, ki)| k * (ai - ki) * inv_l2).collect())
}
