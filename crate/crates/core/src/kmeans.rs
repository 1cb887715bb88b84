//! Lloyd's k-means with k-means++ seeding, used for basis initialization and
//! Nyström landmark selection. Points are the rows of the input.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::distr::{Distribution, weighted::WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone)]
pub struct KMeans {
    /// `k x dim`, one centroid per row.
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

pub fn kmeans(points: ArrayView2<f64>, k: usize, max_iter: usize, seed: u64) -> Result<KMeans> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k-means needs 1 <= k <= {n}, got k = {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seeds(points, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        let mut changed = false;
        for (i, p) in points.outer_iter().enumerate() {
            let c = nearest(&centroids, p).0;
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }

        let dim = points.ncols();
        let mut sums = Array2::<f64>::zeros((k, dim));
        let mut counts = vec![0usize; k];
        for (p, &c) in points.outer_iter().zip(&assignments) {
            sums.row_mut(c).scaled_add(1.0, &p);
            counts[c] += 1;
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let mut row = centroids.row_mut(c);
                row.assign(&sums.row(c));
                row.mapv_inplace(|v| v / count as f64);
            } else {
                // Empty cluster: move it to the point worst served by the others.
                let far = farthest_point(points, &centroids);
                centroids.row_mut(c).assign(&points.row(far));
            }
        }
    }

    Ok(KMeans {
        centroids,
        assignments,
        iterations,
    })
}

fn plus_plus_seeds(points: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::<f64>::zeros((k, points.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut best: Vec<f64> = points
        .outer_iter()
        .map(|p| sq_dist(p, centroids.row(0)))
        .collect();

    for c in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            WeightedIndex::new(&best)
                .map(|w| w.sample(rng))
                .unwrap_or_else(|_| rng.random_range(0..n))
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for (b, p) in best.iter_mut().zip(points.outer_iter()) {
            *b = b.min(sq_dist(p, centroids.row(c)));
        }
    }
    centroids
}

fn nearest(centroids: &Array2<f64>, p: ArrayView1<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.outer_iter().enumerate() {
        let d = sq_dist(p, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn farthest_point(points: ArrayView2<f64>, centroids: &Array2<f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in points.outer_iter().enumerate() {
        let d = nearest(centroids, p).1;
        if d > best.1 {
            best = (i, d);
        }
    }
    best.0
}

pub(crate) fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}
