use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GpError, Result};
use crate::kernel::{sq_dist, InputMatrix};
use crate::sparse::KnotSet;

const MAX_ITER: usize = 100;

/// Distinct rows of `x`, in first-appearance order.
fn distinct_rows(x: &InputMatrix) -> Vec<usize> {
    let mut keep: Vec<usize> = Vec::new();
    for i in 0..x.nrows() {
        if !keep.iter().any(|&j| x.point(j) == x.point(i)) {
            keep.push(i);
        }
    }
    keep
}

/// k-means cluster centers of the rows of `x`, used as initial knots.
///
/// Seeding is k-means++ from a ChaCha stream keyed by `seed`, followed by
/// Lloyd iterations to an assignment fixed point (at most 100). When `k`
/// reaches the number of distinct rows the distinct rows are returned as-is.
pub fn kmeans_init(x: &InputMatrix, k: usize, seed: u64) -> Result<KnotSet> {
    let n = x.nrows();
    if k == 0 {
        return Err(GpError::InvalidArgument("need at least one cluster".into()));
    }
    if k > n {
        return Err(GpError::InvalidArgument(format!("{k} clusters requested for {n} points")));
    }
    let distinct = distinct_rows(x);
    if k >= distinct.len() {
        return Ok(KnotSet::new(x.select(&distinct)?));
    }

    let d = x.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(x.point(rng.gen_range(0..n)).to_vec());
    let mut nearest: Vec<f64> = x.points().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let mut target = rng.gen::<f64>() * total;
        let mut pick = n - 1;
        for (i, w) in nearest.iter().enumerate() {
            if *w > 0.0 && target < *w {
                pick = i;
                break;
            }
            target -= w;
        }
        if nearest[pick] == 0.0 {
            // rounding walked past the end; take the farthest point
            pick = argmax(&nearest);
        }
        centers.push(x.point(pick).to_vec());
        for (i, p) in x.points().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..MAX_ITER {
        let mut changed = false;
        for (i, p) in x.points().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(p, &centers[a]).total_cmp(&sq_dist(p, &centers[b])))
                .unwrap();
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in x.points().enumerate() {
            counts[assign[i]] += 1;
            for (s, v) in sums[assign[i]].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed an empty cluster at the point worst served by its center
                let dists: Vec<f64> = x.points().enumerate().map(|(i, p)| sq_dist(p, &centers[assign[i]])).collect();
                let far = argmax(&dists);
                centers[c] = x.point(far).to_vec();
                assign[far] = c;
            } else {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    KnotSet::from_rows(&centers)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn k_equal_n_returns_distinct_points() {
        let x = InputMatrix::from_rows(&[[0.0, 1.0], [2.0, 3.0], [0.0, 1.0], [5.0, 5.0]]).unwrap();
        let ks = kmeans_init(&x, 4, 1).unwrap();
        assert_eq!(ks.as_rows(), vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![5.0, 5.0]]);
    }

    #[test]
    fn single_cluster_is_column_mean() {
        let x = InputMatrix::from_rows(&[[0.0, 1.0], [2.0, 3.0], [4.0, -1.0]]).unwrap();
        let ks = kmeans_init(&x, 1, 9).unwrap();
        let c = ks.point(0);
        assert!((c[0] - 2.0).abs() < 1e-12 && (c[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separated_blobs_get_one_center_each() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut rows = Vec::new();
        for center in [[-5.0, -5.0], [5.0, 5.0]] {
            for _ in 0..40 {
                rows.push(vec![center[0] + rng.gen_range(-0.5..0.5), center[1] + rng.gen_range(-0.5..0.5)]);
            }
        }
        let x = InputMatrix::from_rows(&rows).unwrap();
        for seed in 0..5 {
            let ks = kmeans_init(&x, 2, seed).unwrap();
            let mut firsts: Vec<f64> = ks.as_rows().iter().map(|r| r[0]).collect();
            firsts.sort_by(f64::total_cmp);
            assert!((firsts[0] + 5.0).abs() < 0.5 && (firsts[1] - 5.0).abs() < 0.5);
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
        let x = InputMatrix::from_rows(&rows).unwrap();
        assert_eq!(kmeans_init(&x, 7, 3).unwrap(), kmeans_init(&x, 7, 3).unwrap());
        assert!(kmeans_init(&x, 61, 3).is_err());
        assert!(kmeans_init(&x, 0, 3).is_err());
    }
}
