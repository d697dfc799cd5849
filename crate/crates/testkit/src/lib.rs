//! Dense reference implementations for testing.
//!
//! Everything here forms full N×N matrices and uses explicit inverses and LU
//! determinants. None of it shares code with the library under test; inputs
//! are plain row-major matrices (one point per row).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Kernel and noise settings for the dense formulas.
#[derive(Clone, Copy, Debug)]
pub struct Dense {
    pub signal_variance: f64,
    pub lengthscale: f64,
    pub noise_variance: f64,
    pub jitter: f64,
}

impl Dense {
    pub fn cov(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
            let mut sq = 0.0;
            for c in 0..a.ncols() {
                let d = a[(i, c)] - b[(j, c)];
                sq += d * d;
            }
            self.signal_variance * (-sq / (2.0 * self.lengthscale * self.lengthscale)).exp()
        })
    }

    /// Σ with the latent nugget on the diagonal.
    pub fn prior(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.cov(a, a) + DMatrix::identity(a.nrows(), a.nrows()) * self.jitter
    }

    pub fn psi(&self, a: &DMatrix<f64>, b: &DMatrix<f64>, knots: &DMatrix<f64>) -> DMatrix<f64> {
        let kuu_inv = self.prior(knots).try_inverse().expect("knot covariance singular");
        self.cov(a, knots) * kuu_inv * self.cov(knots, b)
    }

    pub fn full_log_marginal(&self, x: &DMatrix<f64>, y: &[f64]) -> f64 {
        let n = x.nrows();
        let k = self.prior(x) + DMatrix::identity(n, n) * self.noise_variance;
        gaussian_logpdf(y, &k)
    }

    pub fn elbo(&self, x: &DMatrix<f64>, y: &[f64], knots: &DMatrix<f64>) -> f64 {
        let n = x.nrows();
        let psi = self.psi(x, x, knots);
        let trace: f64 = (0..n).map(|i| self.signal_variance + self.jitter - psi[(i, i)]).sum();
        let cov = &psi + DMatrix::identity(n, n) * self.noise_variance;
        gaussian_logpdf(y, &cov) - trace / (2.0 * self.noise_variance)
    }

    fn fic_cov(&self, x: &DMatrix<f64>, knots: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x.nrows();
        let mut cov = self.psi(x, x, knots);
        for i in 0..n {
            cov[(i, i)] = self.signal_variance + self.jitter + self.noise_variance;
        }
        cov
    }

    pub fn fic_log_marginal(&self, x: &DMatrix<f64>, y: &[f64], knots: &DMatrix<f64>) -> f64 {
        gaussian_logpdf(y, &self.fic_cov(x, knots))
    }

    /// Moments of the optimal knot posterior `h*` given the marginal
    /// covariance `cov_y` of y, then propagated through the exact GP
    /// conditional to the test points. Returns (mean, latent variance).
    fn propagate(
        &self,
        x: &DMatrix<f64>,
        y: &[f64],
        knots: &DMatrix<f64>,
        test: &DMatrix<f64>,
        cov_y: &DMatrix<f64>,
    ) -> (Vec<f64>, Vec<f64>) {
        let kuu = self.prior(knots);
        let kuu_inv = kuu.clone().try_inverse().unwrap();
        let kuf = self.cov(knots, x);
        let cy_inv = cov_y.clone().try_inverse().unwrap();
        let yv = DVector::from_column_slice(y);
        let mu_h = &kuf * &cy_inv * &yv;
        let c_h = &kuu - &kuf * &cy_inv * kuf.transpose();
        let ktu = self.cov(test, knots);
        let proj = &ktu * &kuu_inv;
        let mean = &proj * mu_h;
        let psi_tt = &proj * ktu.transpose();
        let extra = &proj * c_h * proj.transpose();
        let var = (0..test.nrows())
            .map(|j| self.signal_variance + self.jitter - psi_tt[(j, j)] + extra[(j, j)])
            .collect();
        (mean.iter().copied().collect(), var)
    }

    pub fn dtc_predict(
        &self,
        x: &DMatrix<f64>,
        y: &[f64],
        knots: &DMatrix<f64>,
        test: &DMatrix<f64>,
    ) -> (Vec<f64>, Vec<f64>) {
        let n = x.nrows();
        let cov_y = self.psi(x, x, knots) + DMatrix::identity(n, n) * self.noise_variance;
        self.propagate(x, y, knots, test, &cov_y)
    }

    pub fn fic_predict(
        &self,
        x: &DMatrix<f64>,
        y: &[f64],
        knots: &DMatrix<f64>,
        test: &DMatrix<f64>,
    ) -> (Vec<f64>, Vec<f64>) {
        let cov_y = self.fic_cov(x, knots);
        self.propagate(x, y, knots, test, &cov_y)
    }

    pub fn full_predict(&self, x: &DMatrix<f64>, y: &[f64], test: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
        let n = x.nrows();
        let k = self.prior(x) + DMatrix::identity(n, n) * self.noise_variance;
        let kinv = k.try_inverse().unwrap();
        let kxt = self.cov(x, test);
        let yv = DVector::from_column_slice(y);
        let mean = kxt.transpose() * &kinv * yv;
        let cov = self.prior(test) - kxt.transpose() * &kinv * &kxt;
        (mean.iter().copied().collect(), (0..test.nrows()).map(|j| cov[(j, j)]).collect())
    }
}

/// Zero-mean Gaussian log-density via explicit inverse and LU determinant.
pub fn gaussian_logpdf(y: &[f64], cov: &DMatrix<f64>) -> f64 {
    let n = y.len();
    let yv = DVector::from_column_slice(y);
    let inv = cov.clone().try_inverse().expect("covariance singular");
    let quad = (yv.transpose() * inv * &yv)[(0, 0)];
    let det = cov.clone().lu().determinant();
    -0.5 * (quad + det.ln() + n as f64 * (2.0 * PI).ln())
}

pub fn random_points<R: Rng>(rng: &mut R, n: usize, d: usize, spread: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.gen_range(-spread..spread))
}

/// Row-major copy, for handing to constructors that take flat data.
pub fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn random_targets<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], step: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = f(&probe);
        probe[i] = x[i] - step;
        let dn = f(&probe);
        probe[i] = x[i];
        grad.push((up - dn) / (2.0 * step));
    }
    grad
}

/// Relative error with an absolute floor for gradients that are ~0.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// KL(N(m1, v1) ‖ N(m2, v2)) by composite Simpson quadrature over ±12 sd of
/// the first density.
pub fn kl_quadrature(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    let s1 = v1.sqrt();
    let (lo, hi) = (m1 - 12.0 * s1, m1 + 12.0 * s1);
    let n = 20_000;
    let h = (hi - lo) / n as f64;
    let logp = |x: f64, m: f64, v: f64| -0.5 * ((2.0 * PI * v).ln() + (x - m) * (x - m) / v);
    let integrand = |x: f64| {
        let lp = logp(x, m1, v1);
        lp.exp() * (lp - logp(x, m2, v2))
    };
    let mut acc = integrand(lo) + integrand(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * integrand(lo + i as f64 * h);
    }
    acc * h / 3.0
}

/// Median by full sort; midpoint of the two central values for even length.
pub fn sorted_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
