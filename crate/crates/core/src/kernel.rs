//! Covariate designs: raw features, Gaussian-kernel similarities to the
//! training samples, and the Nyström landmark reduction.
//!
//! Feature sets are `n x d` arrays with one sample per row. Covariate
//! matrices come out the other way round (`R x n`, one sample per column) so
//! they can be fed straight into [`crate::trinmf::fit`].

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::{self, sq_dist};
use crate::matrix::NonNegMatrix;

/// Above this many samples the median heuristic works on a fixed-seed subsample.
pub const MEDIAN_EXACT_LIMIT: usize = 2000;
/// Landmark k-means runs on at most this many samples.
pub const LANDMARK_SUBSAMPLE_CAP: usize = 10_000;
const SUBSAMPLE_SEED: u64 = 0x6d65_6469_616e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    PassThrough,
    Direct,
    GaussianFull,
    GaussianNystrom,
}

/// How covariate columns are built for a batch of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum KernelDesign {
    /// The covariate matrix was supplied directly; nothing to rebuild.
    PassThrough { dim: usize },
    /// Scaled features are the covariates (`R = d`).
    Direct { feature_dim: usize },
    /// `A[m, n] = k(anchor_m, sample_n)` with the training samples as anchors.
    GaussianFull {
        beta: f64,
        #[serde(with = "feature_rows")]
        anchors: Array2<f64>,
    },
    /// Same form as `GaussianFull` with `M` landmarks as anchors, so the
    /// covariates are `Cᵀ`.
    GaussianNystrom {
        beta: f64,
        #[serde(with = "feature_rows")]
        landmarks: Array2<f64>,
    },
}

impl KernelDesign {
    pub fn gaussian_full(beta: f64, anchors: Array2<f64>) -> Result<Self> {
        check_beta(beta)?;
        check_non_empty(&anchors.view(), "anchors")?;
        Ok(Self::GaussianFull { beta, anchors })
    }

    pub fn gaussian_nystrom(beta: f64, landmarks: Array2<f64>) -> Result<Self> {
        check_beta(beta)?;
        check_non_empty(&landmarks.view(), "landmarks")?;
        Ok(Self::GaussianNystrom { beta, landmarks })
    }

    pub fn kind(&self) -> KernelKind {
        match self {
            Self::PassThrough { .. } => KernelKind::PassThrough,
            Self::Direct { .. } => KernelKind::Direct,
            Self::GaussianFull { .. } => KernelKind::GaussianFull,
            Self::GaussianNystrom { .. } => KernelKind::GaussianNystrom,
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match self {
            Self::GaussianFull { beta, .. } | Self::GaussianNystrom { beta, .. } => Some(*beta),
            _ => None,
        }
    }

    pub fn anchors(&self) -> Option<&Array2<f64>> {
        match self {
            Self::GaussianFull { anchors, .. } => Some(anchors),
            Self::GaussianNystrom { landmarks, .. } => Some(landmarks),
            _ => None,
        }
    }

    /// Number of raw feature columns expected per sample, if the design
    /// builds covariates from features.
    pub fn feature_dim(&self) -> Option<usize> {
        match self {
            Self::PassThrough { .. } => None,
            Self::Direct { feature_dim } => Some(*feature_dim),
            Self::GaussianFull { anchors, .. } => Some(anchors.ncols()),
            Self::GaussianNystrom { landmarks, .. } => Some(landmarks.ncols()),
        }
    }

    /// Number of covariate rows `R` this design produces.
    pub fn covariate_dim(&self) -> Option<usize> {
        match self {
            Self::PassThrough { dim } => Some(*dim),
            Self::Direct { feature_dim } => Some(*feature_dim),
            Self::GaussianFull { anchors, .. } => Some(anchors.nrows()),
            Self::GaussianNystrom { landmarks, .. } => Some(landmarks.nrows()),
        }
    }

    pub fn build_covariates(&self, samples: ArrayView2<f64>) -> Result<NonNegMatrix> {
        build_covariates(self, samples)
    }
}

/// `exp(-beta * ||u - v||^2)`.
pub fn gaussian_kernel(u: &[f64], v: &[f64], beta: f64) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Length {
            what: "kernel arguments",
            left: u.len(),
            right: v.len(),
        });
    }
    check_beta(beta)?;
    Ok(kernel_value(ArrayView1::from(u), ArrayView1::from(v), beta))
}

fn kernel_value(u: ArrayView1<f64>, v: ArrayView1<f64>, beta: f64) -> f64 {
    (-beta * sq_dist(u, v)).exp()
}

/// Covariate columns for `samples` (`n x d`) under `design`: an `R x n`
/// matrix.
pub fn build_covariates(design: &KernelDesign, samples: ArrayView2<f64>) -> Result<NonNegMatrix> {
    check_non_empty(&samples, "samples")?;
    if let Some(dim) = design.feature_dim() {
        if samples.ncols() != dim {
            return Err(Error::Length {
                what: "sample feature dimension vs design",
                left: samples.ncols(),
                right: dim,
            });
        }
    }
    match design {
        KernelDesign::PassThrough { .. } => Err(Error::Config(
            "a pass-through design has no recipe for building covariates".into(),
        )),
        KernelDesign::Direct { .. } => {
            if let Some(((n, f), &v)) = samples.indexed_iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::Domain(format!(
                    "direct covariates must be non-negative; sample {n} feature {f} is {v}"
                )));
            }
            NonNegMatrix::new(samples.t().to_owned())
        }
        KernelDesign::GaussianFull { beta, anchors } | KernelDesign::GaussianNystrom { beta, landmarks: anchors } => {
            Ok(NonNegMatrix::from_array_unchecked(gaussian_matrix(anchors.view(), samples, *beta)))
        }
    }
}

/// `out[i, j] = k(rows_i, cols_j)`, filled in parallel over rows.
pub fn gaussian_matrix(rows: ArrayView2<f64>, cols: ArrayView2<f64>, beta: f64) -> Array2<f64> {
    let (n, m) = (rows.nrows(), cols.nrows());
    let mut out = Array2::zeros((n, m));
    if m == 0 {
        return out;
    }
    out.as_slice_mut()
        .expect("fresh array is contiguous")
        .par_chunks_mut(m)
        .enumerate()
        .for_each(|(i, row)| {
            let r = rows.row(i);
            for (v, c) in row.iter_mut().zip(cols.outer_iter()) {
                *v = kernel_value(r, c, beta);
            }
        });
    out
}

/// `beta = 1 / median(||u_i - u_j||^2)` over pairs `i < j`.
pub fn median_heuristic_beta(samples: ArrayView2<f64>) -> Result<f64> {
    let n = samples.nrows();
    if n < 2 {
        return Err(Error::Degenerate(format!("median heuristic needs >= 2 samples, got {n}")));
    }
    let subset;
    let pts = if n > MEDIAN_EXACT_LIMIT {
        let mut rng = ChaCha8Rng::seed_from_u64(SUBSAMPLE_SEED);
        let mut idx = sample(&mut rng, n, MEDIAN_EXACT_LIMIT).into_vec();
        idx.sort_unstable();
        subset = samples.select(Axis(0), &idx);
        subset.view()
    } else {
        samples
    };
    let m = pts.nrows();
    let mut d: Vec<f64> = (0..m)
        .into_par_iter()
        .flat_map_iter(|i| (i + 1..m).map(move |j| sq_dist(pts.row(i), pts.row(j))))
        .collect();
    d.sort_unstable_by(f64::total_cmp);
    let len = d.len();
    let median = if len % 2 == 1 {
        d[len / 2]
    } else {
        0.5 * (d[len / 2 - 1] + d[len / 2])
    };
    if !(median > 0.0 && median.is_finite()) {
        return Err(Error::Degenerate(
            "median pairwise squared distance is zero (samples are mostly identical)".into(),
        ));
    }
    Ok(1.0 / median)
}

/// The four-point search grid `beta_median * {1e-2, 1e-1, 1, 1e1}`.
pub fn beta_grid(beta_median: f64) -> Result<Vec<f64>> {
    check_beta(beta_median)?;
    Ok([1e-2, 1e-1, 1.0, 1e1].iter().map(|f| beta_median * f).collect())
}

/// Log-spaced grid `beta_median * 10^(k / steps_per_decade)` for `k` in
/// `lo..=hi`.
pub fn log_beta_grid(beta_median: f64, lo: i32, hi: i32, steps_per_decade: u32) -> Result<Vec<f64>> {
    check_beta(beta_median)?;
    if lo > hi || steps_per_decade == 0 {
        return Err(Error::Config(format!(
            "empty log grid: exponents {lo}..={hi}, {steps_per_decade} steps per decade"
        )));
    }
    Ok((lo..=hi)
        .map(|k| beta_median * 10f64.powf(k as f64 / steps_per_decade as f64))
        .collect())
}

/// `m` landmarks as k-means centroids of the samples (of a fixed-seed subset
/// when there are more than [`LANDMARK_SUBSAMPLE_CAP`] samples).
pub fn select_landmarks(samples: ArrayView2<f64>, m: usize, seed: u64) -> Result<Array2<f64>> {
    let n = samples.nrows();
    if m == 0 || m > n {
        return Err(Error::Config(format!("landmark count must be in 1..={n}, got {m}")));
    }
    if n > LANDMARK_SUBSAMPLE_CAP && m <= LANDMARK_SUBSAMPLE_CAP {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SUBSAMPLE_SEED);
        let mut idx = sample(&mut rng, n, LANDMARK_SUBSAMPLE_CAP).into_vec();
        idx.sort_unstable();
        let subset = samples.select(Axis(0), &idx);
        return Ok(kmeans::kmeans(subset.view(), m, kmeans::DEFAULT_MAX_ITER, seed)?.centroids);
    }
    Ok(kmeans::kmeans(samples, m, kmeans::DEFAULT_MAX_ITER, seed)?.centroids)
}

/// The Nyström blocks `C` (`N x M`, samples vs landmarks) and `W`
/// (`M x M`, landmarks vs landmarks).
#[derive(Debug, Clone)]
pub struct NystromBlocks {
    pub c: NonNegMatrix,
    pub w: NonNegMatrix,
    pub ridge: f64,
}

impl NystromBlocks {
    /// `C (W + ridge I)^{-1} Cᵀ`, the rank-`M` approximation of the full
    /// kernel matrix.
    pub fn approximate_kernel(&self) -> Result<Array2<f64>> {
        let m = self.w.rows();
        let mut w = self.w.as_array().clone();
        for i in 0..m {
            w[[i, i]] += self.ridge;
        }
        let chol = cholesky(&w)?;
        // Solve (W + ridge I) Z = Cᵀ, then K ≈ C Z.
        let z = cholesky_solve(&chol, &self.c.as_array().t().to_owned());
        Ok(self.c.as_array().dot(&z))
    }
}

/// `1e-8 * trace(W) / M`.
pub fn default_ridge(w: &NonNegMatrix) -> f64 {
    let m = w.rows();
    1e-8 * (0..m).map(|i| w.get(i, i)).sum::<f64>() / m as f64
}

pub fn nystrom_design(
    samples: ArrayView2<f64>,
    landmarks: ArrayView2<f64>,
    beta: f64,
    ridge: f64,
) -> Result<NystromBlocks> {
    check_beta(beta)?;
    check_non_empty(&samples, "samples")?;
    check_non_empty(&landmarks, "landmarks")?;
    if samples.ncols() != landmarks.ncols() {
        return Err(Error::Length {
            what: "sample vs landmark dimension",
            left: samples.ncols(),
            right: landmarks.ncols(),
        });
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Config(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    let c = NonNegMatrix::from_array_unchecked(gaussian_matrix(samples, landmarks, beta));
    let w = NonNegMatrix::from_array_unchecked(gaussian_matrix(landmarks, landmarks, beta));
    Ok(NystromBlocks { c, w, ridge })
}

fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::Degenerate(format!(
                "landmark kernel matrix is not positive definite (pivot {j}); increase the ridge"
            )));
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for mut col in x.columns_mut() {
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= l[[i, k]] * col[k];
            }
            col[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in i + 1..n {
                s -= l[[k, i]] * col[k];
            }
            col[i] = s / l[[i, i]];
        }
    }
    x
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("beta must be positive and finite, got {beta}")))
    }
}

fn check_non_empty(a: &ArrayView2<f64>, what: &str) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::Config(format!("{what} must be non-empty, got {:?}", a.dim())));
    }
    Ok(())
}

/// Serializes an `n x d` array as a list of rows.
mod feature_rows {
    use ndarray::Array2;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(a: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = a.outer_iter().map(|r| r.to_vec()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(serde::de::Error::custom("ragged feature rows"));
        }
        Array2::from_shape_vec((n, dim), rows.into_iter().flatten().collect())
            .map_err(serde::de::Error::custom)
    }
}
