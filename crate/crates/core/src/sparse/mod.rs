//! Knot-based sparse approximations.
//!
//! With knots `u`, the low-rank matrix `Ψ_ab = Σ_au Σ_uu⁻¹ Σ_ub` replaces the
//! full covariance. DTC and FIC models can be fitted and used for
//! prediction; DIC and FITC exist only for [`prior_variance_report`].

mod model;
mod prior;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, GpError, Result};
use crate::kernel::{cov_matrix, cov_symmetric, InputMatrix, KernelParams};
use crate::linalg::{cholesky, solve_lower, Chol};

pub use model::{KnotGradient, ObjectiveGradient, SparseModel};
pub use prior::{prior_variance_report, PriorVarianceReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Approximation {
    /// Deterministic inducing conditional.
    Dic,
    /// Deterministic training conditional; its posterior is the VFE posterior.
    Dtc,
    /// Fully independent conditional.
    Fic,
    /// Fully independent training conditional.
    Fitc,
}

impl Approximation {
    pub fn can_fit(self) -> bool {
        matches!(self, Approximation::Dtc | Approximation::Fic)
    }
}

/// Model-selection objective for a sparse fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    /// Variational free energy: the collapsed evidence lower bound, DTC posterior.
    #[serde(rename = "vfe")]
    VfeElbo,
    /// FIC log marginal likelihood.
    #[serde(rename = "fic")]
    FicLogLik,
}

impl Objective {
    pub fn approximation(self) -> Approximation {
        match self {
            Objective::VfeElbo => Approximation::Dtc,
            Objective::FicLogLik => Approximation::Fic,
        }
    }
}

/// Ordered knot locations, one per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnotSet {
    locations: InputMatrix,
}

impl KnotSet {
    pub fn new(locations: InputMatrix) -> Self {
        Self { locations }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Ok(Self::new(InputMatrix::from_rows(rows)?))
    }

    pub fn len(&self) -> usize {
        self.locations.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.locations.dim()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        self.locations.point(k)
    }

    pub fn locations(&self) -> &InputMatrix {
        &self.locations
    }

    pub fn push(&mut self, point: &[f64]) -> Result<()> {
        self.locations.push(point)
    }

    pub fn with_point(&self, point: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.push(point)?;
        Ok(out)
    }

    pub fn set_point(&mut self, k: usize, point: &[f64]) -> Result<()> {
        if k >= self.len() {
            return Err(GpError::IndexOutOfRange { index: k, len: self.len() });
        }
        check_dim(self.dim(), point.len())?;
        if point.iter().any(|v| !v.is_finite()) {
            return Err(GpError::NonFinite(format!("knot {k}")));
        }
        self.locations.point_mut(k).copy_from_slice(point);
        Ok(())
    }

    /// Whether `point` coincides with some knot, coordinate-wise within `tol`.
    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        self.locations
            .points()
            .any(|k| k.iter().zip(point).all(|(a, b)| (a - b).abs() <= tol))
    }

    /// Number of knots that duplicate an earlier knot within `tol`.
    pub fn duplicate_count(&self, tol: f64) -> usize {
        (1..self.len())
            .filter(|&k| {
                (0..k).any(|j| {
                    self.point(j).iter().zip(self.point(k)).all(|(a, b)| (a - b).abs() <= tol)
                })
            })
            .count()
    }

    pub fn as_rows(&self) -> Vec<Vec<f64>> {
        self.locations.points().map(|p| p.to_vec()).collect()
    }
}

/// Cholesky of `Σ_uu + jitter·I`.
pub(crate) fn knot_cholesky(knots: &KnotSet, params: &KernelParams) -> Result<Chol> {
    let mut kuu = cov_symmetric(knots.locations(), params);
    for i in 0..kuu.nrows() {
        kuu[(i, i)] += params.latent_jitter;
    }
    cholesky(kuu, "knot covariance", params.latent_jitter)
}

/// `diag(Ψ_xx)` without forming the N×N matrix.
pub fn psi_diag(x: &InputMatrix, knots: &KnotSet, params: &KernelParams) -> Result<DVector<f64>> {
    let v = psi_cross(x, knots, params)?;
    Ok(DVector::from_iterator(x.nrows(), v.column_iter().map(|c| c.norm_squared())))
}

/// The factor `V = L⁻¹ Σ_ux` (K×N) with `L` the Cholesky factor of
/// `Σ_uu + jitter·I`, so that `Ψ_xx = VᵀV`.
pub fn psi_cross(x: &InputMatrix, knots: &KnotSet, params: &KernelParams) -> Result<DMatrix<f64>> {
    check_dim(knots.dim(), x.dim())?;
    let luu = knot_cholesky(knots, params)?;
    let kux = cov_matrix(knots.locations(), x, params)?;
    Ok(solve_lower(&luu, &kux))
}
