//! ADADELTA gradient ascent.
//!
//! Per coordinate, with accumulators `E[g²]` and `E[Δ²]`:
//!
//! ```text
//! E[g²] ← ρ E[g²] + (1 − ρ) g²
//! Δ     = √(E[Δ²] + ε) / √(E[g²] + ε) · g
//! E[Δ²] ← ρ E[Δ²] + (1 − ρ) Δ²
//! ```
//!
//! The update is added to the parameters, so the objective is maximized.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, GpError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub rho: f64,
    pub epsilon: f64,
    pub max_steps: usize,
    /// Stop when the objective moved less than `rel_tol·(|f|+1)` over the
    /// last `patience` steps.
    pub rel_tol: f64,
    pub patience: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            rho: 0.95,
            epsilon: 1e-6,
            max_steps: 1000,
            rel_tol: 1e-5,
            patience: 10,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(GpError::InvalidArgument(format!("rho must lie in (0,1), got {}", self.rho)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(GpError::InvalidArgument("epsilon must be positive".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(GpError::InvalidArgument("rel_tol must be positive".into()));
        }
        if self.max_steps == 0 || self.patience == 0 {
            return Err(GpError::InvalidArgument("max_steps and patience must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub sq_grad: Vec<f64>,
    pub sq_update: Vec<f64>,
    pub step_count: usize,
}

impl OptimState {
    pub fn new(len: usize) -> Self {
        Self {
            sq_grad: vec![0.0; len],
            sq_update: vec![0.0; len],
            step_count: 0,
        }
    }
}

/// One ascent step. Returns the updated state and parameters.
pub fn adadelta_step(
    state: &OptimState,
    params: &[f64],
    grad: &[f64],
    config: &OptimizerConfig,
) -> Result<(OptimState, Vec<f64>)> {
    check_dim(params.len(), grad.len())?;
    check_dim(params.len(), state.sq_grad.len())?;
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(GpError::NonFinite(format!("gradient coordinate {i}")));
    }
    let (rho, eps) = (config.rho, config.epsilon);
    let mut next = state.clone();
    let mut out = params.to_vec();
    for i in 0..params.len() {
        let g = grad[i];
        next.sq_grad[i] = rho * state.sq_grad[i] + (1.0 - rho) * g * g;
        let delta = (state.sq_update[i] + eps).sqrt() / (next.sq_grad[i] + eps).sqrt() * g;
        next.sq_update[i] = rho * state.sq_update[i] + (1.0 - rho) * delta * delta;
        out[i] += delta;
    }
    next.step_count += 1;
    Ok((next, out))
}

#[derive(Clone, Debug, PartialEq)]
pub enum StopReason {
    Converged,
    MaxSteps,
    /// The objective or its gradient failed mid-run; the best-seen point is
    /// returned.
    Failed(String),
}

#[derive(Clone, Debug)]
pub struct Maximum {
    pub argmax: Vec<f64>,
    pub value: f64,
    /// Objective value at every evaluated iterate, starting with `init`.
    pub trace: Vec<f64>,
    pub stop: StopReason,
}

impl Maximum {
    pub fn steps(&self) -> usize {
        self.trace.len() - 1
    }
}

/// Maximizes `objective` (value and gradient) from `init`, returning the
/// best point seen.
pub fn maximize<F>(mut objective: F, init: &[f64], config: &OptimizerConfig) -> Result<Maximum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    config.validate()?;
    let (f0, mut grad) = objective(init)?;
    if !f0.is_finite() {
        return Err(GpError::NonFinite("objective at the initial point".into()));
    }
    let mut state = OptimState::new(init.len());
    let mut x = init.to_vec();
    let mut trace = vec![f0];
    let mut best = (f0, x.clone());
    let mut stop = StopReason::MaxSteps;

    for _ in 0..config.max_steps {
        let (next_state, next_x) = match adadelta_step(&state, &x, &grad, config) {
            Ok(v) => v,
            Err(e) => {
                stop = StopReason::Failed(e.to_string());
                break;
            }
        };
        let (f, g) = match objective(&next_x) {
            Ok((f, _)) if !f.is_finite() => {
                stop = StopReason::Failed("objective became non-finite".into());
                break;
            }
            Ok(v) => v,
            Err(e) => {
                stop = StopReason::Failed(e.to_string());
                break;
            }
        };
        state = next_state;
        x = next_x;
        grad = g;
        trace.push(f);
        if f > best.0 {
            best = (f, x.clone());
        }
        let t = trace.len() - 1;
        if t >= config.patience {
            let past = trace[t - config.patience];
            if (f - past).abs() <= config.rel_tol * (past.abs() + 1.0) {
                stop = StopReason::Converged;
                break;
            }
        }
    }

    Ok(Maximum {
        argmax: best.1,
        value: best.0,
        trace,
        stop,
    })
}
