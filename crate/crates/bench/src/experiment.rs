use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sparse_gp::knots::{kmeans_init, oat_select, optimize_params, simultaneous_optimize, OatConfig, ProposalMethod};
use sparse_gp::metrics::{aukl, mnlp, srmse, MetricReport};
use sparse_gp::optimizer::{maximize, OptimizerConfig};
use sparse_gp::{FullGpModel, InputMatrix, KernelParams, KnotSet, Objective, PredictiveDistribution};

use crate::config::{ExperimentConfig, KnotInit, KnotSelection, ModelKind, RosterEntry};
use crate::data::{load_csv, split_and_standardize, Dataset};
use crate::error::{BenchError, Result};

/// splitmix64 finalizer, used to derive independent stream seeds.
pub fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub knots: usize,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelTrace {
    pub run: usize,
    pub model_id: String,
    pub error: Option<String>,
    /// Objective against knot count; one point for fixed-size fits.
    pub history: Vec<HistoryPoint>,
    pub initial_objective: Option<f64>,
    pub final_objective: Option<f64>,
    pub optimizer_steps: usize,
    pub stop: Option<String>,
    pub diagnostics: Vec<String>,
    pub seconds: f64,
    pub selection: Option<sparse_gp::knots::SelectionTrace>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub model_id: String,
    pub metrics: Option<MetricReport>,
    pub params: Option<KernelParams>,
    pub knots: Option<Vec<Vec<f64>>>,
    pub trace: ModelTrace,
}

impl RunResult {
    pub fn failed(&self) -> bool {
        self.trace.error.is_some()
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub results: Vec<RunResult>,
    pub record_wall_time: bool,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| r.failed()).count()
    }

    pub fn get(&self, run: usize, model_id: &str) -> Option<&RunResult> {
        self.results.iter().find(|r| r.run == run && r.model_id == model_id)
    }
}

/// Everything a later roster entry may need from an earlier one.
#[derive(Clone, Debug)]
struct Fitted {
    params: KernelParams,
    knots: Option<KnotSet>,
    /// Standardized scale.
    pred: PredictiveDistribution,
    initial_objective: f64,
    final_objective: f64,
    history: Vec<HistoryPoint>,
    optimizer_steps: usize,
    stop: String,
    diagnostics: Vec<String>,
    selection: Option<sparse_gp::knots::SelectionTrace>,
}

/// Full GP with log parameters maximizing the marginal likelihood.
pub fn fit_full_gp(
    x: &InputMatrix,
    y: &[f64],
    init: KernelParams,
    optimizer: &OptimizerConfig,
) -> Result<(FullGpModel, sparse_gp::optimizer::Maximum)> {
    let best = maximize(
        |v| {
            let m = FullGpModel::fit(x, y, init.with_log_vector(v)?)?;
            Ok((m.log_marginal_likelihood(), m.log_marginal_likelihood_grad().to_vec()))
        },
        &init.log_vector(),
        optimizer,
    )?;
    let model = FullGpModel::fit(x, y, init.with_log_vector(&best.argmax)?)?;
    Ok((model, best))
}

fn objective_for(kind: ModelKind) -> Objective {
    match kind {
        ModelKind::Fic => Objective::FicLogLik,
        _ => Objective::VfeElbo,
    }
}

struct RunContext<'a> {
    cfg: &'a ExperimentConfig,
    data: &'a Dataset,
    run: usize,
}

impl RunContext<'_> {
    fn fit(&self, index: usize, entry: &RosterEntry, done: &[Option<Fitted>]) -> Result<Fitted> {
        let cfg = self.cfg;
        let (x, y) = (&self.data.x_train, self.data.y_train.as_slice());
        let init = cfg.init.kernel_params()?;
        let seed = mix_seed(cfg.rng_seed, self.run as u64 + 1, index as u64 + 1);
        let objective = objective_for(entry.approximation);
        let dependency = |id: &str| -> Result<&Fitted> {
            let (j, _) = cfg.entry(id).ok_or_else(|| BenchError::Config(format!("unknown model {id}")))?;
            done[j]
                .as_ref()
                .ok_or_else(|| BenchError::Config(format!("{}: dependency {id} failed", entry.model_id)))
        };

        if entry.approximation == ModelKind::FullGp {
            let (m, best) = fit_full_gp(x, y, init, &cfg.optimizer)?;
            return Ok(Fitted {
                params: *m.params(),
                knots: None,
                pred: m.predict(&self.data.x_test)?,
                initial_objective: best.trace[0],
                final_objective: best.value,
                history: vec![HistoryPoint { knots: 0, objective: best.value }],
                optimizer_steps: best.steps(),
                stop: format!("{:?}", best.stop),
                diagnostics: Vec::new(),
                selection: None,
            });
        }

        let (model, initial, best_value, steps, stop, diagnostics, selection, history) = match entry.knot_selection {
            KnotSelection::OatBo | KnotSelection::OatRs => {
                let oat = OatConfig {
                    proposal: if entry.knot_selection == KnotSelection::OatBo {
                        ProposalMethod::Bo
                    } else {
                        ProposalMethod::Rs
                    },
                    objective,
                    rng_seed: seed,
                    ..cfg.oat.clone()
                };
                let (m, trace) = oat_select(x, y, init, &oat, &cfg.optimizer)?;
                let history = trace
                    .steps
                    .iter()
                    .map(|s| HistoryPoint { knots: s.knot_count, objective: s.objective_after })
                    .collect();
                let steps = trace.steps.iter().map(|s| s.optimizer_steps).sum();
                (
                    m,
                    trace.steps[0].objective_before,
                    trace.final_objective(),
                    steps,
                    format!("{:?}", trace.stop),
                    trace.diagnostics.clone(),
                    Some(trace),
                    history,
                )
            }
            KnotSelection::Simult | KnotSelection::None => {
                let (start_params, knots) = match &entry.knot_init {
                    KnotInit::FromModel(id) => {
                        let f = dependency(id)?;
                        (f.params, f.knots.clone().expect("sparse dependency"))
                    }
                    KnotInit::Kmeans => {
                        let count = if entry.knot_selection == KnotSelection::Simult {
                            let j = cfg.count_source(index).expect("validated");
                            dependency(&cfg.roster[j].model_id)?.knots.as_ref().map_or(0, |k| k.len())
                        } else {
                            cfg.oat.initial_knot_count
                        };
                        (init, kmeans_init(x, count.min(x.nrows()), seed)?)
                    }
                };
                let (m, best) = if entry.knot_selection == KnotSelection::Simult {
                    simultaneous_optimize(objective, x, y, start_params, knots, &cfg.optimizer)?
                } else {
                    optimize_params(objective, x, y, start_params, knots, &cfg.optimizer)?
                };
                let mut diagnostics = Vec::new();
                if m.near_singular() {
                    diagnostics.push("knot covariance is near-singular".to_string());
                }
                let k = m.knots().len();
                (
                    m,
                    best.trace[0],
                    best.value,
                    best.steps(),
                    format!("{:?}", best.stop),
                    diagnostics,
                    None,
                    vec![HistoryPoint { knots: k, objective: best.value }],
                )
            }
        };
        Ok(Fitted {
            params: *model.params(),
            knots: Some(model.knots().clone()),
            pred: model.predict(&self.data.x_test)?,
            initial_objective: initial,
            final_objective: best_value,
            history,
            optimizer_steps: steps,
            stop,
            diagnostics,
            selection,
        })
    }

    fn execute(&self) -> Vec<RunResult> {
        let cfg = self.cfg;
        let mut done: Vec<Option<Fitted>> = Vec::with_capacity(cfg.roster.len());
        let mut rows = Vec::with_capacity(cfg.roster.len());
        for (i, entry) in cfg.roster.iter().enumerate() {
            let t0 = Instant::now();
            let outcome = self.fit(i, entry, &done);
            let seconds = t0.elapsed().as_secs_f64();
            let mut trace = ModelTrace {
                run: self.run,
                model_id: entry.model_id.clone(),
                error: None,
                history: Vec::new(),
                initial_objective: None,
                final_objective: None,
                optimizer_steps: 0,
                stop: None,
                diagnostics: Vec::new(),
                seconds,
                selection: None,
            };
            let row = match &outcome {
                Ok(f) => {
                    trace.history = f.history.clone();
                    trace.initial_objective = Some(f.initial_objective);
                    trace.final_objective = Some(f.final_objective);
                    trace.optimizer_steps = f.optimizer_steps;
                    trace.stop = Some(f.stop.clone());
                    trace.diagnostics = f.diagnostics.clone();
                    trace.selection = f.selection.clone();
                    let pred = f.pred.unstandardize(self.data.y_mean, self.data.y_sd);
                    match (mnlp(&pred, &self.data.y_test), srmse(&pred, &self.data.y_test)) {
                        (Ok(a), Ok(b)) => Some(MetricReport {
                            mnlp: a,
                            srmse: b,
                            aukl: None,
                            log10_aukl: None,
                            train_seconds: seconds,
                            knot_count: f.knots.as_ref().map_or(0, |k| k.len()),
                        }),
                        (Err(e), _) | (_, Err(e)) => {
                            trace.error = Some(format!("metrics: {e}"));
                            None
                        }
                    }
                }
                Err(e) => {
                    trace.error = Some(e.to_string());
                    None
                }
            };
            rows.push(RunResult {
                run: self.run,
                model_id: entry.model_id.clone(),
                metrics: row,
                params: outcome.as_ref().ok().map(|f| f.params),
                knots: outcome.as_ref().ok().and_then(|f| f.knots.as_ref().map(|k| k.as_rows())),
                trace,
            });
            done.push(outcome.ok());
        }

        // AUKL against the run's full GP, when there is one
        let full = cfg
            .roster
            .iter()
            .position(|e| e.approximation == ModelKind::FullGp)
            .and_then(|j| done[j].as_ref());
        if let Some(full) = full {
            for (j, row) in rows.iter_mut().enumerate() {
                let sparse = match (&done[j], cfg.roster[j].approximation) {
                    (Some(f), ModelKind::Vfe | ModelKind::Fic) => f,
                    _ => continue,
                };
                if let (Some(m), Ok(v)) = (row.metrics.as_mut(), aukl(&full.pred, &sparse.pred)) {
                    m.aukl = Some(v);
                    m.log10_aukl = Some(v.log10());
                }
            }
        }
        rows
    }
}

/// Runs every roster model on every split. Model failures become failure
/// rows; only configuration and data errors abort.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let table = load_csv(&cfg.dataset, &cfg.predictors, &cfg.target, &cfg.filters)?;
    let splits = (0..cfg.n_runs)
        .map(|run| split_and_standardize(&table, cfg.split_fraction, mix_seed(cfg.rng_seed, run as u64 + 1, 0)))
        .collect::<Result<Vec<_>>>()?;
    let mut results: Vec<RunResult> = splits
        .par_iter()
        .enumerate()
        .flat_map_iter(|(run, data)| RunContext { cfg, data, run }.execute())
        .collect();
    let order = |id: &str| cfg.entry(id).map_or(usize::MAX, |(i, _)| i);
    results.sort_by_key(|r| (r.run, order(&r.model_id)));
    Ok(ExperimentOutcome {
        results,
        record_wall_time: cfg.record_wall_time,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

pub const RESULTS_HEADER: &str = "run,model_id,mnlp,srmse,aukl,log10_aukl,seconds,knots";

pub fn results_csv(outcome: &ExperimentOutcome) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in &outcome.results {
        let m = r.metrics.as_ref();
        let seconds = if outcome.record_wall_time {
            m.map(|m| m.train_seconds)
        } else {
            None
        };
        let knots = r.knots.as_ref().map(|k| k.len().to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.run,
            r.model_id,
            cell(m.map(|m| m.mnlp)),
            cell(m.map(|m| m.srmse)),
            cell(m.and_then(|m| m.aukl)),
            cell(m.and_then(|m| m.log10_aukl)),
            cell(seconds),
            knots
        );
    }
    out
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn summary_text(outcome: &ExperimentOutcome) -> String {
    let mut ids: Vec<&str> = Vec::new();
    for r in &outcome.results {
        if !ids.contains(&r.model_id.as_str()) {
            ids.push(&r.model_id);
        }
    }
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:>5} {:>10} {:>10} {:>12} {:>10} {:>8}",
        "model", "runs", "mnlp", "srmse", "log10_aukl", "seconds", "knots"
    );
    for id in &ids {
        let rows: Vec<&MetricReport> = outcome
            .results
            .iter()
            .filter(|r| r.model_id == *id)
            .filter_map(|r| r.metrics.as_ref())
            .collect();
        let col = |f: &dyn Fn(&MetricReport) -> Option<f64>| mean(&rows.iter().filter_map(|m| f(m)).collect::<Vec<_>>());
        let _ = writeln!(
            out,
            "{:<8} {:>5} {:>10} {:>10} {:>12} {:>10} {:>8}",
            id,
            rows.len(),
            fmt(col(&|m| Some(m.mnlp))),
            fmt(col(&|m| Some(m.srmse))),
            fmt(col(&|m| m.log10_aukl)),
            if outcome.record_wall_time { fmt(col(&|m| Some(m.train_seconds))) } else { "-".into() },
            fmt(col(&|m| (m.knot_count > 0).then_some(m.knot_count as f64))),
        );
    }
    for r in outcome.results.iter().filter(|r| r.failed()) {
        let _ = writeln!(out, "FAILED run {} {}: {}", r.run, r.model_id, r.trace.error.as_deref().unwrap_or(""));
    }
    out
}

/// Writes `results.csv`, `summary.txt`, and `traces/run<r>_<model>.json`.
pub fn emit_results(outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    if outcome.results.is_empty() {
        return Err(BenchError::Config("no results to write".into()));
    }
    let traces = dir.join("traces");
    fs::create_dir_all(&traces).map_err(|e| BenchError::Io(format!("{}: {e}", traces.display())))?;
    fs::write(dir.join("results.csv"), results_csv(outcome))?;
    fs::write(dir.join("summary.txt"), summary_text(outcome))?;
    for r in &outcome.results {
        let json = serde_json::to_string_pretty(r).map_err(|e| BenchError::Io(e.to_string()))?;
        fs::write(traces.join(format!("run{}_{}.json", r.run, r.model_id)), json)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(run: usize, id: &str, aukl: Option<f64>) -> RunResult {
        RunResult {
            run,
            model_id: id.into(),
            metrics: Some(MetricReport {
                mnlp: 1.5,
                srmse: 0.25,
                aukl,
                log10_aukl: aukl.map(f64::log10),
                train_seconds: 2.0,
                knot_count: 7,
            }),
            params: None,
            knots: Some(vec![vec![0.0]; 7]),
            trace: ModelTrace {
                run,
                model_id: id.into(),
                error: None,
                history: Vec::new(),
                initial_objective: None,
                final_objective: None,
                optimizer_steps: 0,
                stop: None,
                diagnostics: Vec::new(),
                seconds: 2.0,
                selection: None,
            },
        }
    }

    #[test]
    fn csv_leaves_missing_cells_empty() {
        let outcome = ExperimentOutcome {
            results: vec![row(0, "A", None), row(0, "B", Some(0.01))],
            record_wall_time: false,
        };
        let csv = results_csv(&outcome);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], RESULTS_HEADER);
        assert_eq!(lines[1], "0,A,1.5,0.25,,,,7");
        assert_eq!(lines[2], "0,B,1.5,0.25,0.01,-2,,7");
    }

    #[test]
    fn seeds_differ_across_streams() {
        let a = mix_seed(0, 1, 1);
        assert_ne!(a, mix_seed(0, 1, 2));
        assert_ne!(a, mix_seed(0, 2, 1));
        assert_ne!(a, mix_seed(1, 1, 1));
        assert_eq!(a, mix_seed(0, 1, 1));
    }

    #[test]
    fn emit_writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let outcome = ExperimentOutcome {
            results: vec![row(0, "A", None), row(1, "A", None)],
            record_wall_time: true,
        };
        emit_results(&outcome, dir.path()).unwrap();
        assert!(dir.path().join("results.csv").exists());
        assert!(dir.path().join("summary.txt").exists());
        assert!(dir.path().join("traces/run1_A.json").exists());
        let empty = ExperimentOutcome { results: vec![], record_wall_time: true };
        assert!(emit_results(&empty, dir.path()).is_err());
    }
}
