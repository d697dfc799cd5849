//! Knot placement: k-means initialization, greedy one-at-a-time growth with
//! random-search or Bayesian-optimization proposals, and joint optimization
//! of every knot.

mod kmeans;
mod proposal;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{GpError, Result};
use crate::kernel::{InputMatrix, KernelParams, N_PARAMS};
use crate::optimizer::{maximize, Maximum, OptimizerConfig, StopReason};
use crate::sparse::{KnotGradient, KnotSet, Objective, SparseModel};

pub use kmeans::kmeans_init;
pub use proposal::{
    candidate_objective, expected_improvement, propose_bo, propose_rs, Proposal, COINCIDENCE_TOL, EI_XI,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalMethod {
    Bo,
    Rs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OatConfig {
    pub initial_knot_count: usize,
    pub max_knots: usize,
    pub proposal: ProposalMethod,
    pub objective: Objective,
    /// Growth stops once a step improves the objective by less than
    /// `improvement_tol·(|objective|+1)`.
    pub improvement_tol: f64,
    pub rs_subset_size: usize,
    pub bo_budget: usize,
    pub bo_initial_design: usize,
    pub rng_seed: u64,
}

impl Default for OatConfig {
    fn default() -> Self {
        Self {
            initial_knot_count: 5,
            max_knots: 80,
            proposal: ProposalMethod::Bo,
            objective: Objective::VfeElbo,
            improvement_tol: 1e-4,
            rs_subset_size: 30,
            bo_budget: 30,
            bo_initial_design: 10,
            rng_seed: 0,
        }
    }
}

impl OatConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_knot_count == 0 {
            return Err(GpError::InvalidArgument("initial knot count must be positive".into()));
        }
        if self.max_knots < self.initial_knot_count {
            return Err(GpError::InvalidArgument(format!(
                "max_knots {} below the initial count {}",
                self.max_knots, self.initial_knot_count
            )));
        }
        if !(self.improvement_tol >= 0.0) {
            return Err(GpError::InvalidArgument("improvement_tol must be non-negative".into()));
        }
        if self.rs_subset_size == 0 || self.bo_budget == 0 {
            return Err(GpError::InvalidArgument("proposal budgets must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub knot_count: usize,
    /// Objective with the new knot in place, before re-optimization.
    pub objective_before: f64,
    pub objective_after: f64,
    pub proposal_seconds: f64,
    pub optimization_seconds: f64,
    /// Position of the new knot after optimization; empty for the initial fit.
    pub location: Vec<f64>,
    pub evaluations: usize,
    pub optimizer_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SelectionStop {
    MaxKnots,
    SmallImprovement,
    /// The proposal or inner optimization failed; the best model so far is kept.
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub steps: Vec<SelectionStep>,
    pub stop: SelectionStop,
    pub diagnostics: Vec<String>,
}

impl SelectionTrace {
    pub fn final_objective(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.objective_after)
    }
}

fn objective_and_grad(model: &SparseModel<'_>, which: KnotGradient) -> Result<(f64, Vec<f64>)> {
    Ok((model.objective(), model.objective_grad(which)?.to_vec()))
}

/// Maximizes the objective over the log parameters with the knots fixed.
pub fn optimize_params<'d>(
    objective: Objective,
    inputs: &'d InputMatrix,
    targets: &'d [f64],
    params: KernelParams,
    knots: KnotSet,
    config: &OptimizerConfig,
) -> Result<(SparseModel<'d>, Maximum)> {
    let base = SparseModel::fit(objective.approximation(), inputs, targets, params, knots)?;
    let best = maximize(
        |v| {
            let m = base.refit(params.with_log_vector(v)?, base.knots().clone())?;
            let (f, g) = objective_and_grad(&m, KnotGradient::None)?;
            Ok((f, g[..N_PARAMS].to_vec()))
        },
        &params.log_vector(),
        config,
    )?;
    let model = base.refit(params.with_log_vector(&best.argmax)?, base.knots().clone())?;
    Ok((model, best))
}

/// Maximizes the objective jointly over the log parameters and every knot
/// coordinate, starting from `knots`.
pub fn simultaneous_optimize<'d>(
    objective: Objective,
    inputs: &'d InputMatrix,
    targets: &'d [f64],
    params: KernelParams,
    knots: KnotSet,
    config: &OptimizerConfig,
) -> Result<(SparseModel<'d>, Maximum)> {
    let (k, d) = (knots.len(), knots.dim());
    let base = SparseModel::fit(objective.approximation(), inputs, targets, params, knots)?;
    let unpack = |v: &[f64]| -> Result<(KernelParams, KnotSet)> {
        let p = params.with_log_vector(&v[..N_PARAMS])?;
        let locs = InputMatrix::new(k, d, v[N_PARAMS..].to_vec())?;
        Ok((p, KnotSet::new(locs)))
    };
    let mut init = params.log_vector().to_vec();
    init.extend_from_slice(base.knots().locations().as_slice());
    let best = maximize(
        |v| {
            let (p, u) = unpack(v)?;
            objective_and_grad(&base.refit(p, u)?, KnotGradient::All)
        },
        &init,
        config,
    )?;
    let (p, u) = unpack(&best.argmax)?;
    Ok((base.refit(p, u)?, best))
}

/// Greedy one-at-a-time knot selection.
///
/// Starts from k-means knots with optimized parameters. Each step proposes a
/// training input as a new knot, then optimizes the log parameters together
/// with that knot's coordinates; earlier knots are left untouched.
pub fn oat_select<'d>(
    inputs: &'d InputMatrix,
    targets: &'d [f64],
    params: KernelParams,
    config: &OatConfig,
    optimizer: &OptimizerConfig,
) -> Result<(SparseModel<'d>, SelectionTrace)> {
    config.validate()?;
    optimizer.validate()?;
    let d = inputs.dim();
    let init_knots = kmeans_init(inputs, config.initial_knot_count.min(inputs.nrows()), config.rng_seed)?;
    let mut diagnostics = Vec::new();

    let start = Instant::now();
    let before = SparseModel::fit(config.objective.approximation(), inputs, targets, params, init_knots.clone())?
        .objective();
    let (mut model, first) = optimize_params(config.objective, inputs, targets, params, init_knots, optimizer)?;
    let mut steps = vec![SelectionStep {
        knot_count: model.knots().len(),
        objective_before: before,
        objective_after: first.value,
        proposal_seconds: 0.0,
        optimization_seconds: start.elapsed().as_secs_f64(),
        location: Vec::new(),
        evaluations: 0,
        optimizer_steps: first.steps(),
    }];

    let mut stop = SelectionStop::MaxKnots;
    while model.knots().len() < config.max_knots {
        let round = steps.len() as u64;
        let seed = config.rng_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(round);

        let t0 = Instant::now();
        let proposed = match config.proposal {
            ProposalMethod::Bo => propose_bo(&model, inputs, config.bo_budget, config.bo_initial_design, seed),
            ProposalMethod::Rs => propose_rs(&model, inputs, config.rs_subset_size, seed),
        };
        let proposal_seconds = t0.elapsed().as_secs_f64();
        let proposal = match proposed {
            Ok(p) => p,
            Err(e) => {
                stop = SelectionStop::Failed(format!("proposal: {e}"));
                break;
            }
        };
        if proposal.fell_back {
            diagnostics.push(format!("step {round}: every pool point is a knot; used random search"));
        }

        let t1 = Instant::now();
        let base = model.knots().with_point(&proposal.point)?;
        let last = base.len() - 1;
        let unpack = |v: &[f64]| -> Result<(KernelParams, KnotSet)> {
            let mut u = base.clone();
            u.set_point(last, &v[N_PARAMS..])?;
            Ok((model.params().with_log_vector(&v[..N_PARAMS])?, u))
        };
        let mut init = model.params().log_vector().to_vec();
        init.extend_from_slice(&proposal.point);
        let inner = maximize(
            |v| {
                let (p, u) = unpack(v)?;
                let m = model.refit(p, u)?;
                let (f, g) = objective_and_grad(&m, KnotGradient::Single(last))?;
                Ok((f, g))
            },
            &init,
            optimizer,
        );
        let inner = match inner {
            Ok(r) => r,
            Err(e) => {
                stop = SelectionStop::Failed(format!("optimization with {} knots: {e}", base.len()));
                break;
            }
        };
        let (p, u) = unpack(&inner.argmax)?;
        let next = model.refit(p, u)?;
        let optimization_seconds = t1.elapsed().as_secs_f64();
        if next.near_singular() {
            diagnostics.push(format!("step {round}: knot covariance is near-singular"));
        }

        let previous = steps.last().unwrap().objective_after;
        let after = inner.value;
        steps.push(SelectionStep {
            knot_count: base.len(),
            objective_before: inner.trace[0],
            objective_after: after,
            proposal_seconds,
            optimization_seconds,
            location: next.knots().point(last).to_vec(),
            evaluations: proposal.evaluations,
            optimizer_steps: inner.steps(),
        });
        debug_assert_eq!(next.knots().point(last).len(), d);
        model = next;

        if let StopReason::Failed(why) = &inner.stop {
            stop = SelectionStop::Failed(format!("optimization with {} knots: {why}", base.len()));
            break;
        }
        if after - previous < config.improvement_tol * (after.abs() + 1.0) {
            stop = SelectionStop::SmallImprovement;
            break;
        }
    }

    Ok((model, SelectionTrace { steps, stop, diagnostics }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{random_inputs, random_targets};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn data(seed: u64, n: usize) -> (InputMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_inputs(&mut rng, n, 1, 3.0);
        let y = random_targets(&mut rng, x.nrows());
        (x, y)
    }

    fn quick() -> OptimizerConfig {
        OptimizerConfig {
            max_steps: 150,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn oat_respects_caps_and_freezes_old_knots() {
        let (x, y) = data(1, 60);
        let params = KernelParams::new(1.0, 1.0, 0.1).unwrap();
        for proposal in [ProposalMethod::Bo, ProposalMethod::Rs] {
            let cfg = OatConfig {
                initial_knot_count: 2,
                max_knots: 6,
                proposal,
                improvement_tol: 0.0,
                bo_budget: 12,
                bo_initial_design: 4,
                rs_subset_size: 12,
                ..OatConfig::default()
            };
            let (m, trace) = oat_select(&x, &y, params, &cfg, &quick()).unwrap();
            assert!(m.knots().len() <= 6);
            assert_eq!(trace.steps.len(), m.knots().len() - 2 + 1);
            for (i, s) in trace.steps.iter().enumerate().skip(1) {
                assert_eq!(s.location, m.knots().point(s.knot_count - 1).to_vec(), "step {i}");
                assert!(s.objective_after >= s.objective_before);
            }
        }
    }

    #[test]
    fn oat_is_deterministic() {
        let (x, y) = data(2, 50);
        let params = KernelParams::new(1.0, 1.0, 0.1).unwrap();
        let cfg = OatConfig {
            initial_knot_count: 3,
            max_knots: 6,
            bo_budget: 10,
            bo_initial_design: 4,
            rng_seed: 11,
            ..OatConfig::default()
        };
        let (a, ta) = oat_select(&x, &y, params, &cfg, &quick()).unwrap();
        let (b, tb) = oat_select(&x, &y, params, &cfg, &quick()).unwrap();
        assert_eq!(a.knots(), b.knots());
        assert_eq!(a.params(), b.params());
        let objs = |t: &SelectionTrace| t.steps.iter().map(|s| s.objective_after).collect::<Vec<_>>();
        assert_eq!(objs(&ta), objs(&tb));
    }

    #[test]
    fn simultaneous_gradient_length_and_improvement() {
        let (x, y) = data(3, 40);
        let params = KernelParams::new(1.0, 1.0, 0.1).unwrap();
        let knots = kmeans_init(&x, 4, 0).unwrap();
        let (m, best) = simultaneous_optimize(Objective::VfeElbo, &x, &y, params, knots, &quick()).unwrap();
        assert_eq!(best.argmax.len(), N_PARAMS + 4);
        assert!(best.value >= best.trace[0]);
        assert!((m.objective() - best.value).abs() < 1e-9 * (1.0 + best.value.abs()));
    }

    #[test]
    fn config_validation() {
        let bad = OatConfig {
            initial_knot_count: 10,
            max_knots: 5,
            ..OatConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(OatConfig::default().validate().is_ok());
    }
}
