//! Hyperparameter selection and the evaluation protocol.
//!
//! Kernel cross-validation is leakage-safe: the full kernel matrix is built
//! once per bandwidth, and each fold's training design keeps only the rows
//! *and* columns of the training samples. Held-out samples only ever appear
//! as columns of the validation design, against training anchors.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{self, encode_hard, encode_soft, ConfusionMatrix, LabelEncoding};
use crate::error::{Error, Result};
use crate::kernel::{self, KernelDesign};
use crate::matrix::NonNegMatrix;
use crate::trinmf::{self, FitReport, TriNmfConfig, TriNmfModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub valid_frac: f64,
    pub test_frac: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl SplitSpec {
    /// Stratified 40/40/20.
    pub fn standard(seed: u64) -> Self {
        Self {
            train_frac: 0.4,
            valid_frac: 0.4,
            test_frac: 0.2,
            stratified: true,
            seed,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let fracs = [self.train_frac, self.valid_frac, self.test_frac];
        if fracs.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::Config(format!("split fractions must lie in (0, 1), got {fracs:?}")));
        }
        if (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must sum to 1, got {fracs:?}")));
        }
        Ok(())
    }
}

/// Disjoint, exhaustive, ascending index sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Training and validation indices together, in that order.
    pub fn train_valid(&self) -> Vec<usize> {
        self.train.iter().chain(&self.valid).copied().collect()
    }
}

pub fn stratified_split<S: AsRef<str>>(labels: &[S], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    if labels.is_empty() {
        return Err(Error::Degenerate("cannot split an empty dataset".into()));
    }
    let groups: Vec<Vec<usize>> = if spec.stratified {
        let classes = classify::classes_in_order(labels);
        let idx = classify::class_indices(labels, &classes)?;
        (0..classes.len())
            .map(|c| (0..labels.len()).filter(|&i| idx[i] == c).collect())
            .collect()
    } else {
        vec![(0..labels.len()).collect()]
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut split = Split {
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
    };
    for (g, mut members) in groups.into_iter().enumerate() {
        let n = members.len();
        if n < 3 {
            return Err(Error::Degenerate(format!(
                "group {g} has {n} samples; stratified splitting needs at least 3"
            )));
        }
        members.shuffle(&mut rng);
        let mut sizes = [
            (n as f64 * spec.train_frac).round() as usize,
            (n as f64 * spec.valid_frac).round() as usize,
            0,
        ];
        sizes[1] = sizes[1].min(n - sizes[0]);
        sizes[2] = n - sizes[0] - sizes[1];
        // Every part gets at least one member; borrow from the largest part.
        while let Some(empty) = sizes.iter().position(|&s| s == 0) {
            let donor = (0..3).max_by_key(|&i| sizes[i]).expect("three parts");
            sizes[donor] -= 1;
            sizes[empty] += 1;
        }
        let (tr, rest) = members.split_at(sizes[0]);
        let (va, te) = rest.split_at(sizes[1]);
        split.train.extend_from_slice(tr);
        split.valid.extend_from_slice(va);
        split.test.extend_from_slice(te);
    }
    split.train.sort_unstable();
    split.valid.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// One cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub train: Vec<usize>,
    pub held_out: Vec<usize>,
}

/// `k` folds. Stratified by class when every label column is one-hot,
/// otherwise a plain shuffle.
pub fn fold_plans(labels: &LabelEncoding, k: usize, seed: u64) -> Result<Vec<FoldPlan>> {
    let n = labels.len();
    if k < 2 || k > n {
        return Err(Error::Config(format!("fold count must be in 2..={n}, got {k}")));
    }
    let hard = labels
        .columns()
        .as_array()
        .iter()
        .all(|&v| v == 0.0 || v == 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; n];
    if hard {
        let truth = labels.argmax_classes();
        let mut offset = 0;
        for c in 0..labels.num_classes() {
            let mut members: Vec<usize> = (0..n).filter(|&i| truth[i] == Some(c)).collect();
            members.shuffle(&mut rng);
            for (j, i) in members.into_iter().enumerate() {
                fold_of[i] = (offset + j) % k;
            }
            offset += truth.iter().filter(|t| **t == Some(c)).count();
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for (j, i) in order.into_iter().enumerate() {
            fold_of[i] = j % k;
        }
    }
    Ok((0..k)
        .map(|f| FoldPlan {
            train: (0..n).filter(|&i| fold_of[i] != f).collect(),
            held_out: (0..n).filter(|&i| fold_of[i] == f).collect(),
        })
        .collect())
}

/// Training design `K[train, train]` and validation design
/// `K[train, held_out]` cut from a full kernel matrix.
pub fn fold_designs(full_kernel: &Array2<f64>, plan: &FoldPlan) -> Result<(NonNegMatrix, NonNegMatrix)> {
    let rows = full_kernel.select(Axis(0), &plan.train);
    let train = NonNegMatrix::new(rows.select(Axis(1), &plan.train))?;
    let valid = NonNegMatrix::new(rows.select(Axis(1), &plan.held_out))?;
    Ok((train, valid))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvCriterion {
    FrobeniusLoss,
    Accuracy,
}

/// A covariate design to try, before it is bound to training samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DesignCandidate {
    Direct,
    GaussianFull { beta: f64 },
    GaussianNystrom { beta: f64, landmarks: usize, seed: u64 },
}

impl DesignCandidate {
    pub fn beta(&self) -> Option<f64> {
        match self {
            Self::Direct => None,
            Self::GaussianFull { beta } | Self::GaussianNystrom { beta, .. } => Some(*beta),
        }
    }

    /// Binds the candidate to `anchors` (`n x d`, the samples it will be
    /// trained on).
    pub fn design(&self, anchors: ArrayView2<f64>) -> Result<KernelDesign> {
        match *self {
            Self::Direct => Ok(KernelDesign::Direct {
                feature_dim: anchors.ncols(),
            }),
            Self::GaussianFull { beta } => KernelDesign::gaussian_full(beta, anchors.to_owned()),
            Self::GaussianNystrom { beta, landmarks, seed } => {
                let m = landmarks.min(anchors.nrows());
                KernelDesign::gaussian_nystrom(beta, kernel::select_landmarks(anchors, m, seed)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub candidate: DesignCandidate,
    pub mean_loss: f64,
    /// `None` when no fold or validation set could be scored for accuracy.
    pub mean_accuracy: Option<f64>,
    /// Reason the candidate was excluded, if it failed to fit.
    pub failed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub criterion: CvCriterion,
    pub candidates: Vec<CandidateScore>,
    pub chosen: usize,
}

impl CvResult {
    pub fn chosen(&self) -> &CandidateScore {
        &self.candidates[self.chosen]
    }

    /// CSV with columns `kind,beta,mean_loss,mean_accuracy,chosen`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,beta,landmarks,mean_loss,mean_accuracy,chosen\n");
        for (i, c) in self.candidates.iter().enumerate() {
            let (kind, landmarks) = match c.candidate {
                DesignCandidate::Direct => ("direct", String::new()),
                DesignCandidate::GaussianFull { .. } => ("kernel", String::new()),
                DesignCandidate::GaussianNystrom { landmarks, .. } => ("nystrom", landmarks.to_string()),
            };
            let beta = c.candidate.beta().map(|b| format!("{b:e}")).unwrap_or_default();
            let loss = if c.failed.is_some() { "failed".to_string() } else { format!("{:.12e}", c.mean_loss) };
            let acc = c.mean_accuracy.map(|a| format!("{a:.6}")).unwrap_or_default();
            out.push_str(&format!("{kind},{beta},{landmarks},{loss},{acc},{}\n", i == self.chosen));
        }
        out
    }
}

/// Best candidate under `criterion`. Ties go to the smaller bandwidth
/// (direct counts as zero), then to the earlier candidate.
fn choose(candidates: &[CandidateScore], criterion: CvCriterion) -> Result<usize> {
    let key = |c: &CandidateScore| match criterion {
        CvCriterion::FrobeniusLoss => c.mean_loss,
        CvCriterion::Accuracy => -c.mean_accuracy.unwrap_or(f64::NEG_INFINITY),
    };
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.failed.is_none())
        .min_by(|(i, a), (j, b)| {
            key(a)
                .total_cmp(&key(b))
                .then(a.candidate.beta().unwrap_or(0.0).total_cmp(&b.candidate.beta().unwrap_or(0.0)))
                .then(i.cmp(j))
        })
        .map(|(i, _)| i)
        .ok_or(Error::AllCandidatesFailed)
}

/// Validation loss `||Y_v - X Θ A_v||²` and accuracy of the argmax of the
/// membership probabilities against the argmax of the validation labels
/// (samples without a unique argmax are skipped).
fn score(model: &TriNmfModel, a_valid: &NonNegMatrix, y_valid: &LabelEncoding) -> Result<(f64, Option<f64>)> {
    let loss = y_valid.columns().frobenius_loss(&model.reconstruct(a_valid)?)?;
    let pred = classify::membership_probabilities(model, a_valid)?;
    let truth = y_valid.argmax_classes();
    let (mut hit, mut total) = (0usize, 0usize);
    for (p, t) in pred.predicted.iter().zip(&truth) {
        if let Some(t) = t {
            total += 1;
            hit += usize::from(p == t);
        }
    }
    Ok((loss, (total > 0).then(|| hit as f64 / total as f64)))
}

/// k-fold cross-validation of the Gaussian bandwidth.
pub fn kfold_cv_kernel(
    features: ArrayView2<f64>,
    labels: &LabelEncoding,
    betas: &[f64],
    k: usize,
    cfg: &TriNmfConfig,
    criterion: CvCriterion,
    seed: u64,
) -> Result<CvResult> {
    repeated_kfold_cv_kernel(features, labels, betas, k, 1, cfg, criterion, seed)
}

/// k-fold cross-validation repeated over `repeats` fold partitions (seeded
/// `seed + i`); scores are averaged over every fold of every partition.
#[allow(clippy::too_many_arguments)]
pub fn repeated_kfold_cv_kernel(
    features: ArrayView2<f64>,
    labels: &LabelEncoding,
    betas: &[f64],
    k: usize,
    repeats: usize,
    cfg: &TriNmfConfig,
    criterion: CvCriterion,
    seed: u64,
) -> Result<CvResult> {
    if betas.is_empty() {
        return Err(Error::Config("beta grid is empty".into()));
    }
    if repeats == 0 {
        return Err(Error::Config("repeats must be >= 1".into()));
    }
    if features.nrows() != labels.len() {
        return Err(Error::Length {
            what: "feature rows vs labels",
            left: features.nrows(),
            right: labels.len(),
        });
    }
    let mut plans = Vec::with_capacity(k * repeats);
    for i in 0..repeats {
        plans.extend(fold_plans(labels, k, seed.wrapping_add(i as u64))?);
    }
    let truth = labels.argmax_classes();

    let candidates: Vec<CandidateScore> = betas
        .par_iter()
        .map(|&beta| {
            let candidate = DesignCandidate::GaussianFull { beta };
            match cv_one_beta(features, labels, &truth, &plans, beta, cfg) {
                Ok((mean_loss, mean_accuracy)) => CandidateScore {
                    candidate,
                    mean_loss,
                    mean_accuracy,
                    failed: None,
                },
                Err(e) => CandidateScore {
                    candidate,
                    mean_loss: f64::INFINITY,
                    mean_accuracy: None,
                    failed: Some(e.to_string()),
                },
            }
        })
        .collect();
    let chosen = choose(&candidates, criterion)?;
    Ok(CvResult {
        criterion,
        candidates,
        chosen,
    })
}

fn cv_one_beta(
    features: ArrayView2<f64>,
    labels: &LabelEncoding,
    truth: &[Option<usize>],
    plans: &[FoldPlan],
    beta: f64,
    cfg: &TriNmfConfig,
) -> Result<(f64, Option<f64>)> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("beta must be positive and finite, got {beta}")));
    }
    let full = kernel::gaussian_matrix(features, features, beta);
    let mut loss_sum = 0.0;
    let mut acc = Vec::new();
    for (f, plan) in plans.iter().enumerate() {
        let (a_train, a_valid) = fold_designs(&full, plan)?;
        let y_train = labels.select(&plan.train)?;
        let y_valid = labels.select(&plan.held_out)?;
        let (model, _) = trinmf::fit(y_train.columns(), &a_train, cfg)?;
        let model = model.with_class_names(labels.class_names().to_vec())?;
        let (loss, fold_acc) = score(&model, &a_valid, &y_valid)?;
        loss_sum += loss;

        let missing: Vec<&String> = (0..labels.num_classes())
            .filter(|&c| !plan.train.iter().any(|&i| truth[i] == Some(c)))
            .map(|c| &labels.class_names()[c])
            .collect();
        if missing.is_empty() {
            acc.extend(fold_acc);
        } else if truth.iter().any(Option::is_some) {
            log::warn!("fold {f}: training part lacks classes {missing:?}; fold skipped for accuracy");
        }
    }
    let mean_acc = (!acc.is_empty()).then(|| acc.iter().sum::<f64>() / acc.len() as f64);
    Ok((loss_sum / plans.len() as f64, mean_acc))
}

/// Samples with their target label columns.
#[derive(Debug, Clone, Copy)]
pub struct Task<'a> {
    /// `n x d`, one sample per row.
    pub features: ArrayView2<'a, f64>,
    pub targets: &'a LabelEncoding,
}

impl Task<'_> {
    fn check(&self) -> Result<()> {
        if self.features.nrows() != self.targets.len() {
            return Err(Error::Length {
                what: "feature rows vs label columns",
                left: self.features.nrows(),
                right: self.targets.len(),
            });
        }
        Ok(())
    }
}

/// Fits `candidate` on `task`, with the task's samples as anchors.
pub fn fit_candidate(
    candidate: &DesignCandidate,
    task: &Task<'_>,
    cfg: &TriNmfConfig,
) -> Result<(TriNmfModel, FitReport)> {
    task.check()?;
    let design = candidate.design(task.features)?;
    let a = design.build_covariates(task.features)?;
    let (model, report) = trinmf::fit(task.targets.columns(), &a, cfg)?;
    let model = model
        .with_design(design)?
        .with_class_names(task.targets.class_names().to_vec())?;
    Ok((model, report))
}

#[derive(Debug, Clone)]
pub struct GridSearchOutcome {
    pub cv: CvResult,
    /// The winner refit on training and validation samples together.
    pub model: TriNmfModel,
    pub report: FitReport,
    pub refit_samples: usize,
}

/// Train-on-train, score-on-validation selection over `candidates`, then a
/// refit of the winner on both parts.
pub fn grid_search(
    train: &Task<'_>,
    valid: &Task<'_>,
    candidates: &[DesignCandidate],
    cfg: &TriNmfConfig,
    criterion: CvCriterion,
) -> Result<GridSearchOutcome> {
    if candidates.is_empty() {
        return Err(Error::Config("no candidates to search".into()));
    }
    train.check()?;
    valid.check()?;
    let scores: Vec<CandidateScore> = candidates
        .par_iter()
        .map(|cand| {
            let attempt = fit_candidate(cand, train, cfg).and_then(|(model, _)| {
                let a_valid = model.design().build_covariates(valid.features)?;
                score(&model, &a_valid, valid.targets)
            });
            match attempt {
                Ok((mean_loss, mean_accuracy)) => CandidateScore {
                    candidate: *cand,
                    mean_loss,
                    mean_accuracy,
                    failed: None,
                },
                Err(e) => {
                    log::warn!("candidate {cand:?} failed: {e}");
                    CandidateScore {
                        candidate: *cand,
                        mean_loss: f64::INFINITY,
                        mean_accuracy: None,
                        failed: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let chosen = choose(&scores, criterion)?;

    let features = ndarray::concatenate(Axis(0), &[train.features, valid.features])
        .map_err(|_| Error::Length {
            what: "train vs validation feature dimension",
            left: train.features.ncols(),
            right: valid.features.ncols(),
        })?;
    let targets = train.targets.concat(valid.targets)?;
    let combined = Task {
        features: features.view(),
        targets: &targets,
    };
    let (model, report) = fit_candidate(&scores[chosen].candidate, &combined, cfg)?;
    Ok(GridSearchOutcome {
        cv: CvResult {
            criterion,
            candidates: scores,
            chosen,
        },
        model,
        report,
        refit_samples: targets.len(),
    })
}

/// Feature rows and hard class labels.
#[derive(Debug, Clone)]
pub struct LabeledData {
    /// `n x d`, one sample per row.
    pub features: Array2<f64>,
    pub labels: Vec<String>,
    pub class_names: Vec<String>,
}

impl LabeledData {
    pub fn new(features: Array2<f64>, labels: Vec<String>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Length {
                what: "feature rows vs labels",
                left: features.nrows(),
                right: labels.len(),
            });
        }
        let class_names = classify::classes_in_order(&labels);
        Ok(Self {
            features,
            labels,
            class_names,
        })
    }

    pub fn rows(&self, idx: &[usize]) -> Array2<f64> {
        self.features.select(Axis(0), idx)
    }

    pub fn labels_at(&self, idx: &[usize]) -> Vec<&str> {
        idx.iter().map(|&i| self.labels[i].as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub accuracy: f64,
    pub confusion: Option<ConfusionMatrix>,
    pub chosen: Option<DesignCandidate>,
}

/// Split → tune → refit → test, for one repeat.
pub trait Pipeline: Sync {
    fn run(&self, data: &LabeledData, split: &Split, seed: u64) -> Result<PipelineOutcome>;
}

impl<F> Pipeline for F
where
    F: Fn(&LabeledData, &Split, u64) -> Result<PipelineOutcome> + Sync,
{
    fn run(&self, data: &LabeledData, split: &Split, seed: u64) -> Result<PipelineOutcome> {
        self(data, split, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub outcomes: Vec<PipelineOutcome>,
    pub mean_accuracy: f64,
    /// Sample standard deviation; `0` for a single repeat.
    pub sd_accuracy: f64,
}

/// Runs `pipeline` on `repeats` splits seeded `spec.seed + i`.
pub fn repeated_evaluation<P: Pipeline>(
    data: &LabeledData,
    spec: &SplitSpec,
    repeats: usize,
    pipeline: &P,
) -> Result<EvaluationSummary> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be >= 1".into()));
    }
    spec.validate()?;
    let outcomes: Vec<PipelineOutcome> = (0..repeats)
        .into_par_iter()
        .map(|i| {
            let seed = spec.seed.wrapping_add(i as u64);
            stratified_split(&data.labels, &spec.with_seed(seed))
                .and_then(|split| pipeline.run(data, &split, seed))
                .map_err(|e| Error::Repeat {
                    index: i,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let acc: Vec<f64> = outcomes.iter().map(|o| o.accuracy).collect();
    let mean = acc.iter().sum::<f64>() / acc.len() as f64;
    let sd = if acc.len() > 1 {
        (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (acc.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(EvaluationSummary {
        outcomes,
        mean_accuracy: mean,
        sd_accuracy: sd,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DesignFamily {
    Direct,
    Kernel,
    Nystrom { landmarks: usize },
}

/// The standard classifier pipeline: rank equal to the class count,
/// bandwidths from the four-point grid around the median heuristic of the
/// training part, selection on the validation part, refit on both, accuracy
/// on the test part.
#[derive(Debug, Clone)]
pub struct NmfLabPipeline {
    pub family: DesignFamily,
    pub cfg: TriNmfConfig,
    pub criterion: CvCriterion,
    /// Soft-label ratio applied to training and validation labels.
    pub soft_r: Option<f64>,
}

impl NmfLabPipeline {
    pub fn new(family: DesignFamily) -> Self {
        Self {
            family,
            cfg: TriNmfConfig::new(1),
            criterion: CvCriterion::FrobeniusLoss,
            soft_r: None,
        }
    }

    pub fn with_criterion(mut self, criterion: CvCriterion) -> Self {
        self.criterion = criterion;
        self
    }

    pub fn with_soft_r(mut self, r: Option<f64>) -> Self {
        self.soft_r = r;
        self
    }

    pub fn with_config(mut self, cfg: TriNmfConfig) -> Self {
        self.cfg = cfg;
        self
    }

    fn encode(&self, labels: &[&str], classes: &[String]) -> Result<LabelEncoding> {
        match self.soft_r {
            Some(r) => encode_soft(labels, classes, r),
            None => encode_hard(labels, classes),
        }
    }

    fn candidates(&self, train_features: ArrayView2<f64>, seed: u64) -> Result<Vec<DesignCandidate>> {
        Ok(match self.family {
            DesignFamily::Direct => vec![DesignCandidate::Direct],
            DesignFamily::Kernel => kernel::beta_grid(kernel::median_heuristic_beta(train_features)?)?
                .into_iter()
                .map(|beta| DesignCandidate::GaussianFull { beta })
                .collect(),
            DesignFamily::Nystrom { landmarks } => {
                kernel::beta_grid(kernel::median_heuristic_beta(train_features)?)?
                    .into_iter()
                    .map(|beta| DesignCandidate::GaussianNystrom { beta, landmarks, seed })
                    .collect()
            }
        })
    }
}

impl Pipeline for NmfLabPipeline {
    fn run(&self, data: &LabeledData, split: &Split, seed: u64) -> Result<PipelineOutcome> {
        let classes = &data.class_names;
        let mut cfg = self.cfg.clone();
        cfg.rank = classes.len();

        let (xtr, xva, xte) = (data.rows(&split.train), data.rows(&split.valid), data.rows(&split.test));
        let ytr = self.encode(&data.labels_at(&split.train), classes)?;
        let yva = self.encode(&data.labels_at(&split.valid), classes)?;
        let candidates = self.candidates(xtr.view(), seed)?;
        let outcome = grid_search(
            &Task { features: xtr.view(), targets: &ytr },
            &Task { features: xva.view(), targets: &yva },
            &candidates,
            &cfg,
            self.criterion,
        )?;

        let a_test = outcome.model.design().build_covariates(xte.view())?;
        let pred = classify::membership_probabilities(&outcome.model, &a_test)?;
        let confusion = classify::confusion_matrix(&pred, &data.labels_at(&split.test))?;
        Ok(PipelineOutcome {
            accuracy: confusion.accuracy(),
            chosen: Some(outcome.cv.chosen().candidate),
            confusion: Some(confusion),
        })
    }
}
