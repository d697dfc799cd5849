//! Small Cholesky helpers over nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{GpError, Result};

pub(crate) type Chol = Cholesky<f64, Dyn>;

/// Symmetrizes and factorizes `m`.
pub(crate) fn cholesky(mut m: DMatrix<f64>, what: &'static str, jitter: f64) -> Result<Chol> {
    symmetrize(&mut m);
    Cholesky::new(m).ok_or(GpError::Factorization { what, jitter })
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn log_det(chol: &Chol) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// `L⁻¹ B` for the lower factor `L`.
pub(crate) fn solve_lower(chol: &Chol, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = b.clone();
    chol.l_dirty().solve_lower_triangular_mut(&mut x);
    x
}

/// `L⁻ᵀ B` for the lower factor `L`.
pub(crate) fn solve_upper(chol: &Chol, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = b.clone();
    chol.l_dirty().tr_solve_lower_triangular_mut(&mut x);
    x
}

pub(crate) fn solve_upper_vec(chol: &Chol, b: &DVector<f64>) -> DVector<f64> {
    let mut x = b.clone();
    chol.l_dirty().tr_solve_lower_triangular_mut(&mut x);
    x
}

/// Frobenius inner product `Σᵢⱼ AᵢⱼBᵢⱼ`.
pub(crate) fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
