//! Classification on top of the tri-factorization: class labels become
//! columns of the observation matrix, and a fitted model turns covariate
//! columns back into class-membership probabilities.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{normalize_columns_in_place, NonNegMatrix};
use crate::trinmf::TriNmfModel;

/// Label columns on the probability simplex, one per sample, rows in
/// `class_names` order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelEncoding {
    class_names: Vec<String>,
    columns: NonNegMatrix,
}

impl LabelEncoding {
    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// The `P x N` label matrix.
    pub fn columns(&self) -> &NonNegMatrix {
        &self.columns
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.columns.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Keeps the listed samples, in order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        Ok(Self {
            class_names: self.class_names.clone(),
            columns: self.columns.select_columns(idx)?,
        })
    }

    /// Appends `other`'s columns; both must use the same class order.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.class_names != other.class_names {
            return Err(Error::Config("cannot join encodings with different class lists".into()));
        }
        Ok(Self {
            class_names: self.class_names.clone(),
            columns: self.columns.hstack(&other.columns)?,
        })
    }

    /// Class index of each column's unique maximum; `None` where the maximum
    /// is shared (for example a uniform column).
    pub fn argmax_classes(&self) -> Vec<Option<usize>> {
        self.columns
            .as_array()
            .columns()
            .into_iter()
            .map(|col| {
                let top = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut hits = col.iter().enumerate().filter(|(_, v)| **v == top);
                let first = hits.next().map(|(i, _)| i);
                if hits.next().is_some() {
                    None
                } else {
                    first
                }
            })
            .collect()
    }
}

/// Distinct labels in order of first appearance.
pub fn classes_in_order<S: AsRef<str>>(labels: &[S]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for l in labels {
        if !out.iter().any(|c| c == l.as_ref()) {
            out.push(l.as_ref().to_string());
        }
    }
    out
}

/// Index of each label in `class_names`.
pub fn class_indices<S: AsRef<str>>(labels: &[S], class_names: &[String]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|l| {
            class_names
                .iter()
                .position(|c| c == l.as_ref())
                .ok_or_else(|| Error::UnknownLabel(l.as_ref().to_string()))
        })
        .collect()
}

/// One-hot columns.
pub fn encode_hard<S: AsRef<str>>(labels: &[S], class_names: &[String]) -> Result<LabelEncoding> {
    encode_with(labels, class_names, 1.0, 0.0)
}

/// The true class gets `r`, every other class `(1 - r) / (P - 1)`.
pub fn encode_soft<S: AsRef<str>>(labels: &[S], class_names: &[String], r: f64) -> Result<LabelEncoding> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Config(format!("soft-label ratio must lie in [0, 1], got {r}")));
    }
    let p = class_names.len();
    if p == 1 {
        if r < 1.0 {
            return Err(Error::Config("soft labels with r < 1 need at least two classes".into()));
        }
        return encode_hard(labels, class_names);
    }
    if r == 1.0 {
        return encode_hard(labels, class_names);
    }
    encode_with(labels, class_names, r, (1.0 - r) / (p - 1) as f64)
}

/// Uniform `1/P` columns for unlabeled samples.
pub fn encode_unlabeled(count: usize, class_names: &[String]) -> Result<LabelEncoding> {
    let p = class_names.len();
    if p == 0 {
        return Err(Error::Config("at least one class is required".into()));
    }
    Ok(LabelEncoding {
        class_names: class_names.to_vec(),
        columns: NonNegMatrix::filled(p, count, 1.0 / p as f64)?,
    })
}

/// Per-sample encoding for partly labeled data: samples whose label equals
/// `unlabeled` get uniform columns, the rest hard (or soft with ratio `r`).
pub fn encode_partial<S: AsRef<str>>(
    labels: &[S],
    class_names: &[String],
    r: Option<f64>,
    unlabeled: Option<&str>,
) -> Result<LabelEncoding> {
    let is_unlabeled = |l: &S| unlabeled.is_some_and(|u| l.as_ref() == u);
    let known: Vec<&str> = labels.iter().filter(|l| !is_unlabeled(l)).map(AsRef::as_ref).collect();
    let known = match r {
        Some(r) => encode_soft(&known, class_names, r)?,
        None => encode_hard(&known, class_names)?,
    };
    let p = class_names.len();
    let mut cols = Array2::from_elem((p, labels.len()), 1.0 / p as f64);
    let mut next = known.columns.as_array().columns().into_iter();
    for (n, l) in labels.iter().enumerate() {
        if !is_unlabeled(l) {
            cols.column_mut(n).assign(&next.next().expect("one column per known label"));
        }
    }
    Ok(LabelEncoding {
        class_names: class_names.to_vec(),
        columns: NonNegMatrix::new(cols)?,
    })
}

fn encode_with<S: AsRef<str>>(labels: &[S], class_names: &[String], on: f64, off: f64) -> Result<LabelEncoding> {
    if class_names.is_empty() {
        return Err(Error::Config("at least one class is required".into()));
    }
    let idx = class_indices(labels, class_names)?;
    let mut cols = Array2::from_elem((class_names.len(), labels.len()), off);
    for (n, &c) in idx.iter().enumerate() {
        cols[[c, n]] = on;
    }
    Ok(LabelEncoding {
        class_names: class_names.to_vec(),
        columns: NonNegMatrix::new(cols)?,
    })
}

/// Class-membership probabilities for a batch of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbPrediction {
    /// `P x N*`, every column on the simplex.
    pub probabilities: NonNegMatrix,
    /// Argmax row of each column; ties go to the lowest index.
    pub predicted: Vec<usize>,
    pub class_names: Vec<String>,
}

impl ProbPrediction {
    pub fn predicted_names(&self) -> Vec<&str> {
        self.predicted.iter().map(|&i| self.class_names[i].as_str()).collect()
    }
}

/// `Ỹ = X B̃` where `B̃` is `Θ A` with every column scaled to sum to one
/// (zero columns become uniform).
pub fn membership_probabilities(model: &TriNmfModel, a_new: &NonNegMatrix) -> Result<ProbPrediction> {
    let mut b = model.coefficients(a_new)?.into_array();
    normalize_columns_in_place(&mut b);
    let probs = model.basis().as_array().dot(&b);
    let predicted = probs.columns().into_iter().map(|c| argmax(c.iter().copied())).collect();
    let p = model.basis().rows();
    let class_names = match model.class_names() {
        Some(names) => names.to_vec(),
        None => (1..=p).map(|i| format!("class{i}")).collect(),
    };
    Ok(ProbPrediction {
        probabilities: NonNegMatrix::from_array_unchecked(probs),
        predicted,
        class_names,
    })
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Counts with rows = predicted class, columns = true class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn from_indices(class_names: &[String], predicted: &[usize], truth: &[usize]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::Length {
                what: "predictions vs truth",
                left: predicted.len(),
                right: truth.len(),
            });
        }
        let p = class_names.len();
        let mut counts = vec![vec![0usize; p]; p];
        for (&pr, &tr) in predicted.iter().zip(truth) {
            if pr >= p || tr >= p {
                return Err(Error::UnknownLabel(format!("class index {}", pr.max(tr))));
            }
            counts[pr][tr] += 1;
        }
        Ok(Self {
            class_names: class_names.to_vec(),
            counts,
        })
    }

    /// Adds `other`'s counts; both must use the same class order.
    pub fn add(&mut self, other: &Self) -> Result<()> {
        if self.class_names != other.class_names {
            return Err(Error::Config("cannot add confusion matrices over different classes".into()));
        }
        for (row, o) in self.counts.iter_mut().zip(&other.counts) {
            for (c, v) in row.iter_mut().zip(o) {
                *c += v;
            }
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    /// `trace / total`; `0` for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.correct() as f64 / total as f64
        }
    }

    /// CSV with a `predicted\true` corner cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("predicted\\true");
        for c in &self.class_names {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            out.push_str(name);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion_matrix<S: AsRef<str>>(pred: &ProbPrediction, truth: &[S]) -> Result<ConfusionMatrix> {
    if pred.predicted.len() != truth.len() {
        return Err(Error::Length {
            what: "predictions vs truth",
            left: pred.predicted.len(),
            right: truth.len(),
        });
    }
    let truth_idx = class_indices(truth, &pred.class_names)?;
    ConfusionMatrix::from_indices(&pred.class_names, &pred.predicted, &truth_idx)
}

/// Basis column `q` is assigned the class of its largest entry. Logs a
/// warning when two bases land on the same class.
pub fn basis_class_assignment(model: &TriNmfModel) -> Vec<usize> {
    let x = model.basis().as_array();
    let assignment: Vec<usize> = x.axis_iter(Axis(1)).map(|c| argmax(c.iter().copied())).collect();
    let mut seen = vec![false; x.nrows()];
    let is_permutation = x.nrows() == x.ncols()
        && assignment.iter().all(|&c| !std::mem::replace(&mut seen[c], true));
    if !is_permutation {
        log::warn!("basis-to-class assignment {assignment:?} is not a permutation; X is far from a permuted identity");
    }
    assignment
}
