use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sparse_gp::knots::{candidate_objective, kmeans_init, oat_select, optimize_params, simultaneous_optimize, OatConfig};
use sparse_gp::optimizer::OptimizerConfig;
use sparse_gp::{InputMatrix, KernelParams, Objective};

use crate::error::Result;

pub const SYNTH_DOMAIN: (f64, f64) = (0.0, 10.0);

/// Noisy draws of `sin(x) + 0.5·sin(3x)/(1 + 0.1x)` on [0, 10], noise sd 0.2,
/// sorted by input.
pub fn synthetic_1d(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.2).expect("valid sd");
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(SYNTH_DOMAIN.0..SYNTH_DOMAIN.1)).collect();
    x.sort_by(f64::total_cmp);
    let y = x.iter().map(|&v| synthetic_truth(v) + noise.sample(&mut rng)).collect();
    (x, y)
}

pub fn synthetic_truth(x: f64) -> f64 {
    x.sin() + 0.5 * (3.0 * x).sin() / (1.0 + 0.1 * x)
}

fn column(values: &[f64]) -> Result<InputMatrix> {
    Ok(InputMatrix::column(values)?)
}

#[derive(Clone, Debug)]
pub struct SpikeCheck {
    pub knot: f64,
    pub at_knot: f64,
    pub left: f64,
    pub right: f64,
}

impl SpikeCheck {
    /// Strictly above both neighbours.
    pub fn is_local_max(&self) -> bool {
        self.at_knot > self.left && self.at_knot > self.right
    }
}

#[derive(Clone, Debug)]
pub struct SpikeSweep {
    pub knots: Vec<f64>,
    pub params: KernelParams,
    /// ELBO of the five-knot model.
    pub baseline: f64,
    /// (location, ELBO with the sixth knot there, kind)
    pub rows: Vec<(f64, f64, &'static str)>,
    pub checks: Vec<SpikeCheck>,
    pub offset: f64,
}

impl SpikeSweep {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("location,elbo,baseline_elbo,kind\n");
        for (x, f, kind) in &self.rows {
            let _ = writeln!(out, "{x},{f},{},{kind}", self.baseline);
        }
        out
    }
}

/// Fits a five-knot VFE model to 1-D synthetic data, then scores the ELBO
/// with a sixth knot swept over the domain, at each existing knot, and at
/// each knot ± 2% of the domain width. Parameters stay fixed during the sweep.
pub fn spike_demo(n: usize, grid: usize, seed: u64, optimizer: &OptimizerConfig) -> Result<SpikeSweep> {
    let (xs, ys) = synthetic_1d(n, seed);
    let x = column(&xs)?;
    let init = KernelParams::new(1.0, 1.0, 0.1)?;
    let knots = kmeans_init(&x, 5, seed)?;
    let (model, _) = optimize_params(Objective::VfeElbo, &x, &ys, init, knots, optimizer)?;
    let baseline = model.objective();
    let width = SYNTH_DOMAIN.1 - SYNTH_DOMAIN.0;
    let offset = 0.02 * width;

    let mut rows = Vec::new();
    for i in 0..grid {
        let loc = SYNTH_DOMAIN.0 + width * i as f64 / (grid - 1) as f64;
        rows.push((loc, candidate_objective(&model, &[loc])?, "grid"));
    }
    let mut checks = Vec::new();
    let mut knot_locs: Vec<f64> = model.knots().as_rows().into_iter().map(|r| r[0]).collect();
    knot_locs.sort_by(f64::total_cmp);
    for &u in &knot_locs {
        let at = candidate_objective(&model, &[u])?;
        let left = candidate_objective(&model, &[u - offset])?;
        let right = candidate_objective(&model, &[u + offset])?;
        rows.push((u, at, "knot"));
        rows.push((u - offset, left, "offset"));
        rows.push((u + offset, right, "offset"));
        checks.push(SpikeCheck { knot: u, at_knot: at, left, right });
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(SpikeSweep {
        knots: knot_locs,
        params: *model.params(),
        baseline,
        rows,
        checks,
        offset,
    })
}

#[derive(Clone, Debug)]
pub struct SynthFit {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub initial_knots: Vec<f64>,
    pub oat_knots: Vec<f64>,
    pub refined_knots: Vec<f64>,
    pub oat_objective: f64,
    pub refined_objective: f64,
    /// (location, OAT mean, OAT sd, refined mean, refined sd)
    pub curve: Vec<[f64; 5]>,
}

impl SynthFit {
    pub fn data_csv(&self) -> String {
        let mut out = String::from("x,y\n");
        for (a, b) in self.x.iter().zip(&self.y) {
            let _ = writeln!(out, "{a},{b}");
        }
        out
    }

    pub fn curve_csv(&self) -> String {
        let mut out = String::from("x,oat_mean,oat_sd,refined_mean,refined_sd\n");
        for r in &self.curve {
            let _ = writeln!(out, "{},{},{},{},{}", r[0], r[1], r[2], r[3], r[4]);
        }
        out
    }

    pub fn knots_csv(&self) -> String {
        let mut out = String::from("stage,location\n");
        for (stage, ks) in [("initial", &self.initial_knots), ("oat", &self.oat_knots), ("refined", &self.refined_knots)] {
            for k in ks {
                let _ = writeln!(out, "{stage},{k}");
            }
        }
        out
    }
}

/// OAT-BO VFE fit to 300 synthetic points, then simultaneous refinement of
/// the selected knots.
pub fn synth_demo(seed: u64, oat: &OatConfig, optimizer: &OptimizerConfig) -> Result<SynthFit> {
    let (xs, ys) = synthetic_1d(300, seed);
    let x = column(&xs)?;
    let init = KernelParams::new(1.0, 1.0, 0.1)?;
    let oat = OatConfig {
        objective: Objective::VfeElbo,
        rng_seed: seed,
        ..oat.clone()
    };
    let initial_knots = kmeans_init(&x, oat.initial_knot_count, seed)?;
    let (model, trace) = oat_select(&x, &ys, init, &oat, optimizer)?;
    let (refined, best) =
        simultaneous_optimize(Objective::VfeElbo, &x, &ys, *model.params(), model.knots().clone(), optimizer)?;

    let grid: Vec<f64> = (0..200).map(|i| SYNTH_DOMAIN.0 + (SYNTH_DOMAIN.1 - SYNTH_DOMAIN.0) * i as f64 / 199.0).collect();
    let g = column(&grid)?;
    let a = model.predict(&g)?;
    let b = refined.predict(&g)?;
    let curve = (0..grid.len())
        .map(|i| [grid[i], a.latent_mean[i], a.noisy_variance[i].sqrt(), b.latent_mean[i], b.noisy_variance[i].sqrt()])
        .collect();
    let flat = |k: &sparse_gp::KnotSet| k.as_rows().into_iter().map(|r| r[0]).collect::<Vec<_>>();
    Ok(SynthFit {
        x: xs,
        y: ys.clone(),
        initial_knots: flat(&initial_knots),
        oat_knots: flat(model.knots()),
        refined_knots: flat(refined.knots()),
        oat_objective: trace.final_objective(),
        refined_objective: best.value,
        curve,
    })
}
