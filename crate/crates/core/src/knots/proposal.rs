use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{GpError, Result};
use crate::full_gp::FullGpModel;
use crate::kernel::{InputMatrix, KernelParams};
use crate::optimizer::{maximize, OptimizerConfig};
use crate::sparse::SparseModel;

/// Pool points within this distance of an existing knot are never proposed by BO.
pub const COINCIDENCE_TOL: f64 = 1e-9;

/// Exploration margin for expected improvement, in standardized gain units.
pub const EI_XI: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub index: usize,
    pub point: Vec<f64>,
    /// Objective with the candidate appended, parameters held fixed.
    pub objective: f64,
    /// Objective evaluations spent.
    pub evaluations: usize,
    /// BO had no eligible candidate and fell back to random search.
    pub fell_back: bool,
}

/// Objective after appending `point` to the model's knots.
pub fn candidate_objective(model: &SparseModel<'_>, point: &[f64]) -> Result<f64> {
    let knots = model.knots().with_point(point)?;
    let f = model.refit(*model.params(), knots)?.objective();
    if f.is_finite() {
        Ok(f)
    } else {
        Err(GpError::NonFinite("candidate objective".into()))
    }
}

/// Evaluates candidates in parallel; failures score −∞.
fn evaluate(model: &SparseModel<'_>, pool: &InputMatrix, indices: &[usize]) -> Vec<f64> {
    indices
        .par_iter()
        .map(|&i| candidate_objective(model, pool.point(i)).unwrap_or(f64::NEG_INFINITY))
        .collect()
}

/// Index of the largest value, earliest on ties.
fn first_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn best_of(pool: &InputMatrix, indices: &[usize], values: &[f64], fell_back: bool) -> Result<Proposal> {
    // indices are ascending, so the earliest maximum is the lowest pool index
    let b = first_argmax(values);
    if values[b] == f64::NEG_INFINITY {
        return Err(GpError::InvalidState("every evaluated candidate failed".into()));
    }
    Ok(Proposal {
        index: indices[b],
        point: pool.point(indices[b]).to_vec(),
        objective: values[b],
        evaluations: values.len(),
        fell_back,
    })
}

/// Random-search proposal: scores a uniform subset of the pool, drawn
/// without replacement, and returns the best.
pub fn propose_rs(model: &SparseModel<'_>, pool: &InputMatrix, subset_size: usize, seed: u64) -> Result<Proposal> {
    if pool.nrows() == 0 {
        return Err(GpError::InvalidArgument("candidate pool is empty".into()));
    }
    if subset_size == 0 {
        return Err(GpError::InvalidArgument("random-search subset size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = sample(&mut rng, pool.nrows(), subset_size.min(pool.nrows())).into_vec();
    indices.sort_unstable();
    let values = evaluate(model, pool, &indices);
    best_of(pool, &indices, &values, false)
}

fn standardize_columns(x: &InputMatrix) -> InputMatrix {
    let (n, d) = (x.nrows(), x.dim());
    let mut out = x.clone();
    for c in 0..d {
        let mean = x.points().map(|p| p[c]).sum::<f64>() / n as f64;
        let var = x.points().map(|p| (p[c] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for i in 0..n {
            out.point_mut(i)[c] = (x.point(i)[c] - mean) / sd;
        }
    }
    out
}

fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    values.iter().map(|v| (v - mean) / sd).collect()
}

fn surrogate_optimizer() -> OptimizerConfig {
    OptimizerConfig {
        max_steps: 200,
        ..OptimizerConfig::default()
    }
}

/// SE-kernel GP fitted to standardized gains by maximizing its marginal
/// likelihood. The log parameters are kept inside a box so a handful of
/// observations cannot collapse the surrogate.
fn fit_surrogate(x: &InputMatrix, y: &[f64]) -> Result<FullGpModel> {
    const BOUNDS: [(f64, f64); 3] = [(-4.0, 4.0), (-3.0, 3.0), (-9.0, 1.0)];
    let clamp = |v: &[f64]| -> Vec<f64> { v.iter().zip(BOUNDS).map(|(a, (lo, hi))| a.clamp(lo, hi)).collect() };
    let init = KernelParams::new(1.0, 1.0, 0.1)?;
    let fit = |v: &[f64]| -> Result<FullGpModel> { FullGpModel::fit(x, y, init.with_log_vector(&clamp(v))?) };
    let best = maximize(
        |v| {
            let m = fit(v)?;
            let mut g = m.log_marginal_likelihood_grad().to_vec();
            // no pull beyond the box
            for ((gi, vi), (lo, hi)) in g.iter_mut().zip(v).zip(BOUNDS) {
                if (*vi <= lo && *gi < 0.0) || (*vi >= hi && *gi > 0.0) {
                    *gi = 0.0;
                }
            }
            Ok((m.log_marginal_likelihood(), g))
        },
        &init.log_vector(),
        &surrogate_optimizer(),
    );
    match best {
        Ok(b) => fit(&b.argmax),
        Err(_) => FullGpModel::fit(x, y, init),
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected improvement over `best` for a Gaussian with mean `mu` and
/// standard deviation `sd`.
pub fn expected_improvement(mu: f64, sd: f64, best: f64, xi: f64) -> f64 {
    let imp = mu - best - xi;
    if sd <= 1e-12 {
        return imp.max(0.0);
    }
    let z = imp / sd;
    imp * normal_cdf(z) + sd * normal_pdf(z)
}

/// Bayesian-optimization proposal over a finite pool.
///
/// Scores `initial_design` random candidates, then repeatedly fits a GP
/// surrogate to the standardized scores and evaluates the candidate with
/// the highest expected improvement, until `budget` candidates have been
/// scored. Pool points coinciding with a current knot are excluded. Returns
/// the best scored candidate.
pub fn propose_bo(
    model: &SparseModel<'_>,
    pool: &InputMatrix,
    budget: usize,
    initial_design: usize,
    seed: u64,
) -> Result<Proposal> {
    if pool.nrows() == 0 {
        return Err(GpError::InvalidArgument("candidate pool is empty".into()));
    }
    if budget == 0 {
        return Err(GpError::InvalidArgument("BO budget must be positive".into()));
    }
    let eligible: Vec<usize> = (0..pool.nrows())
        .filter(|&i| !model.knots().contains(pool.point(i), COINCIDENCE_TOL))
        .collect();
    if eligible.is_empty() {
        let mut p = propose_rs(model, pool, pool.nrows(), seed)?;
        p.fell_back = true;
        return Ok(p);
    }
    let budget = budget.min(eligible.len());
    let n_init = initial_design.clamp(1, budget);
    let coords = standardize_columns(&pool.select(&eligible)?);

    // positions into `eligible`
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = sample(&mut rng, eligible.len(), n_init).into_vec();
    seen.sort_unstable();
    let picked: Vec<usize> = seen.iter().map(|&j| eligible[j]).collect();
    let mut values = evaluate(model, pool, &picked);
    let mut evaluated = vec![false; eligible.len()];
    for &j in &seen {
        evaluated[j] = true;
    }

    while seen.len() < budget {
        let finite: Vec<usize> = (0..seen.len()).filter(|&i| values[i].is_finite()).collect();
        let next = if finite.len() < 2 {
            (0..eligible.len()).find(|&j| !evaluated[j]).unwrap()
        } else {
            let obs_x = coords.select(&finite.iter().map(|&i| seen[i]).collect::<Vec<_>>())?;
            let obs_y = standardize(&finite.iter().map(|&i| values[i]).collect::<Vec<_>>());
            let best = obs_y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let surrogate = fit_surrogate(&obs_x, &obs_y)?;
            let open: Vec<usize> = (0..eligible.len()).filter(|&j| !evaluated[j]).collect();
            let pred = surrogate.predict(&coords.select(&open)?)?;
            let ei: Vec<f64> = (0..open.len())
                .map(|i| expected_improvement(pred.latent_mean[i], pred.latent_variance[i].sqrt(), best, EI_XI))
                .collect();
            open[first_argmax(&ei)]
        };
        let f = candidate_objective(model, pool.point(eligible[next])).unwrap_or(f64::NEG_INFINITY);
        evaluated[next] = true;
        seen.push(next);
        values.push(f);
    }

    let mut order: Vec<usize> = (0..seen.len()).collect();
    order.sort_by_key(|&i| seen[i]);
    let indices: Vec<usize> = order.iter().map(|&i| eligible[seen[i]]).collect();
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    best_of(pool, &indices, &sorted, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelParams;
    use crate::sparse::{Approximation, KnotSet};
    use crate::test_util::{random_inputs, random_targets};

    fn fixture(seed: u64) -> (InputMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_inputs(&mut rng, 40, 1, 3.0);
        let y = random_targets(&mut rng, x.nrows());
        (x, y)
    }

    fn model<'d>(x: &'d InputMatrix, y: &'d [f64]) -> SparseModel<'d> {
        let knots = KnotSet::from_rows(&[[-1.0], [1.0]]).unwrap();
        SparseModel::fit(Approximation::Dtc, x, y, KernelParams::new(1.0, 0.7, 0.05).unwrap(), knots).unwrap()
    }

    #[test]
    fn ei_closed_form() {
        // at mu = best + xi, EI = sd φ(0)
        let ei = expected_improvement(1.01, 2.0, 1.0, 0.01);
        assert!((ei - 2.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert_eq!(expected_improvement(0.5, 0.0, 0.0, 0.01), 0.49);
        assert_eq!(expected_improvement(-0.5, 0.0, 0.0, 0.01), 0.0);
        assert!(expected_improvement(0.0, 1.0, 0.0, 0.0) > expected_improvement(0.0, 0.5, 0.0, 0.0));
    }

    #[test]
    fn full_subset_rs_is_exhaustive() {
        let (x, y) = fixture(1);
        let m = model(&x, &y);
        let p = propose_rs(&m, &x, x.nrows(), 3).unwrap();
        let all: Vec<f64> = (0..x.nrows()).map(|i| candidate_objective(&m, x.point(i)).unwrap()).collect();
        assert_eq!(p.index, first_argmax(&all));
        assert_eq!(p.objective, all[p.index]);
    }

    #[test]
    fn full_budget_bo_is_exhaustive() {
        let (x, y) = fixture(2);
        let m = model(&x, &y);
        let p = propose_bo(&m, &x, x.nrows(), 5, 4).unwrap();
        let all: Vec<f64> = (0..x.nrows()).map(|i| candidate_objective(&m, x.point(i)).unwrap()).collect();
        assert_eq!(p.index, first_argmax(&all));
        assert_eq!(p.evaluations, x.nrows());
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let (x, y) = fixture(3);
        let m = model(&x, &y);
        // the same point repeated scores identically
        let pool = InputMatrix::from_rows(&[[0.3], [0.3], [0.3]]).unwrap();
        assert_eq!(propose_rs(&m, &pool, 3, 0).unwrap().index, 0);
        assert_eq!(propose_bo(&m, &pool, 3, 1, 0).unwrap().index, 0);
    }

    #[test]
    fn bo_skips_existing_knots_and_falls_back() {
        let (x, y) = fixture(4);
        let m = model(&x, &y);
        let pool = InputMatrix::from_rows(&[[-1.0], [0.2], [1.0]]).unwrap();
        let p = propose_bo(&m, &pool, 3, 2, 0).unwrap();
        assert_eq!(p.index, 1);
        assert_eq!(p.evaluations, 1);

        let only_knots = InputMatrix::from_rows(&[[-1.0], [1.0]]).unwrap();
        let p = propose_bo(&m, &only_knots, 3, 2, 0).unwrap();
        assert!(p.fell_back);
    }

    #[test]
    fn proposals_are_deterministic() {
        let (x, y) = fixture(5);
        let m = model(&x, &y);
        assert_eq!(propose_bo(&m, &x, 12, 4, 8).unwrap(), propose_bo(&m, &x, 12, 4, 8).unwrap());
        assert_eq!(propose_rs(&m, &x, 9, 8).unwrap(), propose_rs(&m, &x, 9, 8).unwrap());
    }
}
