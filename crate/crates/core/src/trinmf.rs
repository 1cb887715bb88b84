//! Tri-factorization `Y ≈ X Θ A` with a known covariate matrix `A`.
//!
//! `Y` is `P x N` (observations or label columns), `A` is `R x N`, and the
//! learned factors are a column-stochastic basis `X` (`P x Q`) and a
//! non-negative parameter matrix `Θ` (`Q x R`). Both are fitted with
//! multiplicative updates on the squared Frobenius loss.
//!
//! One iteration runs: update `X`, normalize its columns (moving the column
//! sums into the rows of `Θ` so the product `XΘ` is unchanged), refresh the
//! reconstruction, update `Θ`, refresh the reconstruction again.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelDesign;
use crate::kmeans;
use crate::matrix::{normalize_columns_in_place, squared_distance, NonNegMatrix, DEFAULT_EPS};

pub const DEFAULT_MAX_ITER: usize = 5000;
pub const DEFAULT_REL_TOL: f64 = 1e-6;
/// Seed used by [`InitMode::KMeansCentroids`] when none is given.
pub const DEFAULT_KMEANS_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitMode {
    /// `X0 = I_P`; requires `Q == P`. The natural start for label matrices.
    Identity,
    /// Columns of `X0` are k-means centroids of the columns of `Y`.
    KMeansCentroids { seed: u64 },
    /// Uniform(0, 1) entries from a seeded generator.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriNmfConfig {
    pub rank: usize,
    pub max_iter: usize,
    /// Stop once `|L_t - L_{t-1}| / L_{t-1}` falls below this.
    pub rel_tol: f64,
    pub eps: f64,
    pub init: InitMode,
    pub record_trajectory: bool,
}

impl TriNmfConfig {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            max_iter: DEFAULT_MAX_ITER,
            rel_tol: DEFAULT_REL_TOL,
            eps: DEFAULT_EPS,
            init: InitMode::Identity,
            record_trajectory: true,
        }
    }

    pub fn with_init(mut self, init: InitMode) -> Self {
        self.init = init;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_rank(mut self, rank: usize) -> Self {
        self.rank = rank;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Config("rank must be >= 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::Config(format!("rel_tol must be > 0, got {}", self.rel_tol)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Loss before the first iteration followed by the loss after each
    /// iteration. Empty when trajectory recording is off.
    pub losses: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    pub final_loss: f64,
    /// Column sums of `B = ΘA` on the training covariates, before any
    /// normalization.
    pub b_column_sums: Vec<f64>,
}

impl FitReport {
    pub fn mean_b_column_sum(&self) -> f64 {
        self.b_column_sums.iter().sum::<f64>() / self.b_column_sums.len() as f64
    }
}

/// A fitted basis and parameter matrix, plus the recipe for turning raw
/// features into covariate columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriNmfModel {
    basis: NonNegMatrix,
    theta: NonNegMatrix,
    design: KernelDesign,
    class_names: Option<Vec<String>>,
}

impl TriNmfModel {
    pub fn new(
        basis: NonNegMatrix,
        theta: NonNegMatrix,
        design: KernelDesign,
        class_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if theta.rows() != basis.cols() {
            return Err(Error::shape("model (basis vs theta)", basis.shape(), theta.shape()));
        }
        if let Some(dim) = design.covariate_dim() {
            if dim != theta.cols() {
                return Err(Error::shape("model (theta vs design)", theta.shape(), (dim, 0)));
            }
        }
        for (q, s) in basis.as_array().sum_axis(Axis(0)).iter().enumerate() {
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("basis column {q} sums to {s}, expected 1")));
            }
        }
        if let Some(names) = &class_names {
            if names.len() != basis.rows() {
                return Err(Error::Length {
                    what: "class names vs basis rows",
                    left: names.len(),
                    right: basis.rows(),
                });
            }
        }
        Ok(Self {
            basis,
            theta,
            design,
            class_names,
        })
    }

    /// The `P x Q` column-stochastic basis `X`.
    pub fn basis(&self) -> &NonNegMatrix {
        &self.basis
    }

    /// The `Q x R` parameter matrix `Θ`.
    pub fn theta(&self) -> &NonNegMatrix {
        &self.theta
    }

    pub fn design(&self) -> &KernelDesign {
        &self.design
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn rank(&self) -> usize {
        self.basis.cols()
    }

    pub fn covariate_dim(&self) -> usize {
        self.theta.cols()
    }

    pub fn with_design(self, design: KernelDesign) -> Result<Self> {
        Self::new(self.basis, self.theta, design, self.class_names)
    }

    pub fn with_class_names(self, class_names: Vec<String>) -> Result<Self> {
        Self::new(self.basis, self.theta, self.design, Some(class_names))
    }

    /// `B = Θ A` for covariate columns `a`.
    pub fn coefficients(&self, a: &NonNegMatrix) -> Result<NonNegMatrix> {
        if a.rows() != self.theta.cols() {
            return Err(Error::shape("coefficients", self.theta.shape(), a.shape()));
        }
        self.theta.matmul(a)
    }

    /// `X Θ A`.
    pub fn reconstruct(&self, a: &NonNegMatrix) -> Result<NonNegMatrix> {
        self.basis.matmul(&self.coefficients(a)?)
    }
}

/// Snapshot handed to a [`fit_observed`] callback after each iteration.
pub struct IterationState<'a> {
    pub iteration: usize,
    pub loss: f64,
    pub basis: &'a Array2<f64>,
    pub theta: &'a Array2<f64>,
}

/// Fits `Y ≈ X Θ A`. Returns a model with a pass-through design; attach the
/// real design with [`TriNmfModel::with_design`].
pub fn fit(y: &NonNegMatrix, a: &NonNegMatrix, cfg: &TriNmfConfig) -> Result<(TriNmfModel, FitReport)> {
    fit_observed(y, a, cfg, |_| {})
}

/// [`fit`] with a callback invoked after every iteration.
pub fn fit_observed<F>(
    y: &NonNegMatrix,
    a: &NonNegMatrix,
    cfg: &TriNmfConfig,
    mut observe: F,
) -> Result<(TriNmfModel, FitReport)>
where
    F: FnMut(&IterationState<'_>),
{
    check_problem(y, a, cfg)?;
    let (x0, theta0) = init_factors(y, a, cfg)?;
    let yv = y.as_array();
    let av = a.as_array();
    let eps = cfg.eps;

    let mut x = x0.into_array();
    let mut theta = theta0.into_array();

    // Y Aᵀ and A Aᵀ never change.
    let y_at = yv.dot(&av.t());
    let gram = av.dot(&av.t());

    let mut b = theta.dot(av);
    let mut loss = squared_distance(&yv.view(), &x.dot(&b).view());
    let mut losses = Vec::new();
    if cfg.record_trajectory {
        losses.push(loss);
    }
    let mut converged = false;
    let mut iterations_run = 0;

    for iteration in 1..=cfg.max_iter {
        let mut theta_gram = theta.dot(&gram);

        // X ← X ⊙ (Y Aᵀ Θᵀ) ⊘ (Ŷ Aᵀ Θᵀ), with Ŷ Aᵀ = X Θ (A Aᵀ).
        let num = y_at.dot(&theta.t());
        let den = x.dot(&theta_gram).dot(&theta.t());
        multiplicative_step(&mut x, &num, &den, eps);
        let sums = normalize_columns_in_place(&mut x);
        for (q, s) in sums.iter().enumerate() {
            theta.row_mut(q).mapv_inplace(|v| v * s);
            theta_gram.row_mut(q).mapv_inplace(|v| v * s);
        }

        // Θ ← Θ ⊙ (Xᵀ Y Aᵀ) ⊘ (Xᵀ Ŷ Aᵀ), Ŷ refreshed with the new X.
        let num = x.t().dot(&y_at);
        let den = x.t().dot(&x).dot(&theta_gram);
        multiplicative_step(&mut theta, &num, &den, eps);

        b = theta.dot(av);
        let new_loss = squared_distance(&yv.view(), &x.dot(&b).view());
        iterations_run = iteration;
        if cfg.record_trajectory {
            losses.push(new_loss);
        }
        observe(&IterationState {
            iteration,
            loss: new_loss,
            basis: &x,
            theta: &theta,
        });
        let change = (loss - new_loss).abs() / loss.max(1e-30);
        loss = new_loss;
        if change < cfg.rel_tol {
            converged = true;
            break;
        }
    }

    let report = FitReport {
        losses,
        iterations_run,
        converged,
        final_loss: loss,
        b_column_sums: b.sum_axis(Axis(0)).to_vec(),
    };
    let model = TriNmfModel::new(
        NonNegMatrix::from_array_unchecked(x),
        NonNegMatrix::from_array_unchecked(theta),
        KernelDesign::PassThrough { dim: a.rows() },
        None,
    )?;
    Ok((model, report))
}

fn multiplicative_step(factor: &mut Array2<f64>, num: &Array2<f64>, den: &Array2<f64>, eps: f64) {
    ndarray::Zip::from(factor)
        .and(num)
        .and(den)
        .for_each(|f, &n, &d| *f *= n / (d + eps));
}

fn check_problem(y: &NonNegMatrix, a: &NonNegMatrix, cfg: &TriNmfConfig) -> Result<()> {
    cfg.validate()?;
    if y.cols() != a.cols() {
        return Err(Error::shape("fit (Y vs A columns)", y.shape(), a.shape()));
    }
    let max_rank = y.rows().min(y.cols());
    if cfg.rank > max_rank {
        return Err(Error::Config(format!(
            "rank {} exceeds min(P, N) = {max_rank}",
            cfg.rank
        )));
    }
    Ok(())
}

/// One multiplicative update of `X` then `Θ` from the current state, where
/// `yhat` is the current reconstruction `X Θ A`.
pub fn update_step(
    y: &NonNegMatrix,
    yhat: &NonNegMatrix,
    x: &NonNegMatrix,
    theta: &NonNegMatrix,
    a: &NonNegMatrix,
    eps: f64,
) -> Result<(NonNegMatrix, NonNegMatrix)> {
    if x.cols() != theta.rows() {
        return Err(Error::shape("update_step (X vs Θ)", x.shape(), theta.shape()));
    }
    if theta.cols() != a.rows() {
        return Err(Error::shape("update_step (Θ vs A)", theta.shape(), a.shape()));
    }
    if y.shape() != (x.rows(), a.cols()) {
        return Err(Error::shape("update_step (Y vs XΘA)", y.shape(), (x.rows(), a.cols())));
    }
    if yhat.shape() != y.shape() {
        return Err(Error::shape("update_step (Y vs Ŷ)", y.shape(), yhat.shape()));
    }
    let (yv, yhv, av) = (y.as_array(), yhat.as_array(), a.as_array());

    let mut x_new = x.as_array().clone();
    let mut theta_new = theta.as_array().clone();

    let at_tt = av.t().dot(&theta_new.t());
    multiplicative_step(&mut x_new, &yv.dot(&at_tt), &yhv.dot(&at_tt), eps);
    let sums = normalize_columns_in_place(&mut x_new);
    for (q, s) in sums.iter().enumerate() {
        theta_new.row_mut(q).mapv_inplace(|v| v * s);
    }

    let yhat_mid = x_new.dot(&theta_new).dot(av);
    let num = x_new.t().dot(yv).dot(&av.t());
    let den = x_new.t().dot(&yhat_mid).dot(&av.t());
    multiplicative_step(&mut theta_new, &num, &den, eps);

    Ok((
        NonNegMatrix::from_array_unchecked(x_new),
        NonNegMatrix::from_array_unchecked(theta_new),
    ))
}

/// Starting factors. `X0` per [`InitMode`], column-normalized; `Θ0` is the
/// constant `1/(QR)` rescaled so `mean(X0 Θ0 A) == mean(Y)`.
pub fn init_factors(
    y: &NonNegMatrix,
    a: &NonNegMatrix,
    cfg: &TriNmfConfig,
) -> Result<(NonNegMatrix, NonNegMatrix)> {
    check_problem(y, a, cfg)?;
    let (p, q, r) = (y.rows(), cfg.rank, a.rows());

    let x0 = match cfg.init {
        InitMode::Identity => {
            if q != p {
                return Err(Error::Config(format!(
                    "identity initialization needs rank == {p} (rows of Y), got {q}"
                )));
            }
            NonNegMatrix::identity(p)?
        }
        InitMode::KMeansCentroids { seed } => {
            let points = y.as_array().t();
            let km = kmeans::kmeans(points, q, kmeans::DEFAULT_MAX_ITER, seed)?;
            let mut x = km.centroids.t().to_owned();
            // Centroids of non-negative points are non-negative; clear -0.0 noise.
            x.mapv_inplace(|v| v.max(0.0));
            normalize_columns_in_place(&mut x);
            NonNegMatrix::from_array_unchecked(x)
        }
        InitMode::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut x = Array2::from_shape_fn((p, q), |_| rng.random::<f64>());
            normalize_columns_in_place(&mut x);
            NonNegMatrix::from_array_unchecked(x)
        }
    };

    let mut theta = Array2::from_elem((q, r), 1.0 / (q * r) as f64);
    let fitted_mean = x0.as_array().dot(&theta).dot(a.as_array()).mean().unwrap_or(0.0);
    if fitted_mean > 0.0 {
        let scale = y.mean() / fitted_mean;
        theta.mapv_inplace(|v| v * scale);
    }
    Ok((x0, NonNegMatrix::from_array_unchecked(theta)))
}
