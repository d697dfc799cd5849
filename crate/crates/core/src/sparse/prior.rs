use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Approximation, KnotSet};
use crate::error::{check_dim, Result};
use crate::kernel::{cov_matrix, cov_symmetric, InputMatrix, KernelParams};
use crate::linalg::cholesky;

const MATCH_TOL: f64 = 1e-8;

/// Whether an approximation's implied prior (co)variances agree with the
/// full GP prior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorVarianceReport {
    pub train_cov_match: bool,
    pub train_var_match: bool,
    pub test_var_match: bool,
    pub test_cov_match: bool,
}

/// Compares the prior (co)variances implied by `approx` at training and test
/// inputs against the full GP prior, entry-wise at tolerance 1e-8.
pub fn prior_variance_report(
    approx: Approximation,
    x_train: &InputMatrix,
    x_test: &InputMatrix,
    knots: &KnotSet,
    params: &KernelParams,
) -> Result<PriorVarianceReport> {
    check_dim(x_train.dim(), x_test.dim())?;
    check_dim(x_train.dim(), knots.dim())?;

    let mut kuu = cov_symmetric(knots.locations(), params);
    for i in 0..kuu.nrows() {
        kuu[(i, i)] += params.latent_jitter;
    }
    let luu = cholesky(kuu, "knot covariance", params.latent_jitter)?;

    let implied = |x: &InputMatrix, conditional_exact: bool| -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let mut full = cov_symmetric(x, params);
        for i in 0..full.nrows() {
            full[(i, i)] += params.latent_jitter;
        }
        let v = luu.l_dirty().solve_lower_triangular(&cov_matrix(knots.locations(), x, params)?)
            .expect("triangular factor");
        let psi = v.tr_mul(&v);
        let approx_cov = if conditional_exact {
            // Ψ + (Σ − Ψ)
            full.clone()
        } else {
            psi.clone()
        };
        Ok((full, approx_cov))
    };

    // Training conditional: deterministic for DIC/DTC, diagonal-corrected for FIC/FITC.
    let (train_full, mut train_cov) = implied(x_train, false)?;
    if matches!(approx, Approximation::Fic | Approximation::Fitc) {
        for i in 0..train_cov.nrows() {
            train_cov[(i, i)] = train_full[(i, i)];
        }
    }

    // Test conditional: DIC deterministic, DTC/FITC exact, FIC diagonal-corrected.
    let exact_test = matches!(approx, Approximation::Dtc | Approximation::Fitc);
    let (test_full, mut test_cov) = implied(x_test, exact_test)?;
    if approx == Approximation::Fic {
        for i in 0..test_cov.nrows() {
            test_cov[(i, i)] = test_full[(i, i)];
        }
    }

    let (train_var, train_offdiag) = compare(&train_full, &train_cov);
    let (test_var, test_offdiag) = compare(&test_full, &test_cov);
    Ok(PriorVarianceReport {
        train_cov_match: train_offdiag,
        train_var_match: train_var,
        test_var_match: test_var,
        test_cov_match: test_offdiag,
    })
}

/// (diagonal matches, off-diagonal matches)
fn compare(full: &DMatrix<f64>, approx: &DMatrix<f64>) -> (bool, bool) {
    let n = full.nrows();
    let close = |a: f64, b: f64| (a - b).abs() <= MATCH_TOL * (1.0 + a.abs().max(b.abs()));
    let diag = (0..n).all(|i| close(full[(i, i)], approx[(i, i)]));
    let off = (0..n).all(|j| (0..n).filter(|&i| i != j).all(|i| close(full[(i, j)], approx[(i, j)])));
    (diag, off)
}
