use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_gp::knots::{candidate_objective, kmeans_init, optimize_params};
use sparse_gp::metrics::aukl;
use sparse_gp::optimizer::OptimizerConfig;
use sparse_gp::{Approximation, FullGpModel, InputMatrix, KernelParams, KnotSet, Objective, SparseModel};

fn problem(seed: u64, n: usize, d: usize) -> (InputMatrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let x = InputMatrix::new(n, d, data).unwrap();
    let y = x
        .points()
        .map(|p| p.iter().map(|v| v.sin()).sum::<f64>() + 0.3 * rng.gen_range(-1.0..1.0))
        .collect();
    (x, y)
}

fn vfe(x: &InputMatrix, y: &[f64], p: KernelParams, rows: &[Vec<f64>]) -> f64 {
    SparseModel::fit(Approximation::Dtc, x, y, p, KnotSet::from_rows(rows).unwrap())
        .unwrap()
        .objective()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn elbo_bounds_evidence_and_grows_with_knots(
        seed in 0u64..10_000,
        d in 1usize..4,
        s in 0.3f64..3.0,
        ell in 0.3f64..3.0,
        t in 0.01f64..1.0,
    ) {
        let (x, y) = problem(seed, 25, d);
        let p = KernelParams::new(s, ell, t).unwrap();
        let full = FullGpModel::fit(&x, &y, p).unwrap().log_marginal_likelihood();
        let rows: Vec<Vec<f64>> = x.points().map(|r| r.to_vec()).collect();
        let mut prev = f64::NEG_INFINITY;
        for k in [2, 5, 10, 25] {
            let f = vfe(&x, &y, p, &rows[..k]);
            prop_assert!(f <= full + 1e-8 * full.abs().max(1.0), "k={k}: {f} > {full}");
            prop_assert!(f >= prev - 1e-8 * f.abs().max(1.0), "k={k}: {f} < {prev}");
            prev = f;
        }
    }
}

#[test]
fn knots_on_every_input_recover_the_evidence() {
    let (x, y) = problem(3, 30, 2);
    let p = KernelParams::new(1.2, 0.8, 0.2).unwrap().with_jitter(1e-10 * 1.2).unwrap();
    let full = FullGpModel::fit(&x, &y, p).unwrap().log_marginal_likelihood();
    let rows: Vec<Vec<f64>> = x.points().map(|r| r.to_vec()).collect();
    let f = vfe(&x, &y, p, &rows);
    assert!((f - full).abs() <= 1e-6 * full.abs().max(1.0), "{f} vs {full}");
}

#[test]
fn a_duplicate_knot_leaves_the_elbo_at_its_baseline() {
    // Re-adding an existing knot adds no new direction to the knot span, so
    // the bound only moves by the jitter; nearby distinct locations can only
    // help.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut xs: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..10.0)).collect();
    xs.sort_by(f64::total_cmp);
    let y: Vec<f64> = xs.iter().map(|v| v.sin() + 0.2 * rng.gen_range(-1.7..1.7)).collect();
    let x = InputMatrix::column(&xs).unwrap();
    let init = KernelParams::new(1.0, 1.0, 0.1).unwrap();
    let knots = kmeans_init(&x, 5, 0).unwrap();
    let (model, _) = optimize_params(Objective::VfeElbo, &x, &y, init, knots, &OptimizerConfig::default()).unwrap();
    let base = model.objective();
    for k in 0..5 {
        let u = model.knots().point(k)[0];
        let at = candidate_objective(&model, &[u]).unwrap();
        assert!((at - base).abs() < 1e-3, "knot {u}: {at} vs baseline {base}");
        for off in [-0.2, 0.2] {
            assert!(candidate_objective(&model, &[u + off]).unwrap() >= at - 1e-9);
        }
    }
}

#[test]
fn aukl_shrinks_along_nested_knot_sets() {
    for seed in 0..5 {
        let (x, y) = problem(100 + seed, 30, 2);
        let (test, _) = problem(200 + seed, 40, 2);
        let p = KernelParams::new(1.0, 1.0, 0.1).unwrap();
        let full = FullGpModel::fit(&x, &y, p).unwrap().predict(&test).unwrap();
        let rows: Vec<Vec<f64>> = x.points().map(|r| r.to_vec()).collect();
        let mut prev = f64::INFINITY;
        for k in [1, 3, 6, 10, 15, 20, 25, 30] {
            let m = SparseModel::fit(Approximation::Dtc, &x, &y, p, KnotSet::from_rows(&rows[..k]).unwrap()).unwrap();
            let a = aukl(&full, &m.predict(&test).unwrap()).unwrap();
            assert!(a <= prev + 1e-8, "seed {seed} k={k}: {a} > {prev}");
            prev = a;
        }
        assert!(prev < 1e-4, "all-knot AUKL {prev}");
    }
}
