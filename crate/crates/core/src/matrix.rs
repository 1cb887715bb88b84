//! Dense non-negative matrices.
//!
//! Every factor in the model (label matrix, basis, parameters, covariates,
//! kernel blocks) is a [`NonNegMatrix`]. Entries are stored row-major in an
//! `ndarray::Array2<f64>` with standard layout. Samples are columns
//! throughout: a label matrix is `P x N`, a covariate matrix is `R x N`.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Division guard used by [`NonNegMatrix::hadamard_div`] when the caller has
/// no better value.
pub const DEFAULT_EPS: f64 = 1e-12;

/// A dense matrix whose entries are all finite and `>= 0`, with at least one
/// row and one column.
#[derive(Debug, Clone, PartialEq)]
pub struct NonNegMatrix {
    data: Array2<f64>,
}

impl NonNegMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (rows, cols) = data.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::Empty { rows, cols });
        }
        if let Some(((row, col), &value)) = data
            .indexed_iter()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::InvalidEntry { row, col, value });
        }
        Ok(Self {
            data: data.as_standard_layout().into_owned(),
        })
    }

    /// Builds a matrix from row vectors.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut flat = Vec::with_capacity(n_rows * n_cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(Error::shape("from_rows", (0, n_cols), (i, r.len())));
            }
            flat.extend_from_slice(r);
        }
        let data = Array2::from_shape_vec((n_rows, n_cols), flat)
            .map_err(|_| Error::Empty { rows: n_rows, cols: n_cols })?;
        Self::new(data)
    }

    /// Callers guarantee the invariants; checked in debug builds.
    pub(crate) fn from_array_unchecked(data: Array2<f64>) -> Self {
        debug_assert!(data.nrows() > 0 && data.ncols() > 0);
        debug_assert!(data.iter().all(|v| v.is_finite() && *v >= 0.0));
        Self {
            data: data.as_standard_layout().into_owned(),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Empty { rows, cols });
        }
        Self::new(Array2::from_elem((rows, cols), value))
    }

    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty { rows: 0, cols: 0 });
        }
        Ok(Self::from_array_unchecked(Array2::eye(n)))
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[[row, col]]
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    /// Row-major copy of the entries.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.outer_iter().map(|r| r.to_vec()).collect()
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        self.data.column(col).to_vec()
    }

    pub fn transpose(&self) -> Self {
        Self::from_array_unchecked(self.data.t().to_owned())
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if cols.is_empty() {
            return Err(Error::Empty { rows: self.rows(), cols: 0 });
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.cols()) {
            return Err(Error::shape("select_columns", self.shape(), (0, bad)));
        }
        Ok(Self::from_array_unchecked(self.data.select(Axis(1), cols)))
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty { rows: 0, cols: self.cols() });
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.rows()) {
            return Err(Error::shape("select_rows", self.shape(), (bad, 0)));
        }
        Ok(Self::from_array_unchecked(self.data.select(Axis(0), rows)))
    }

    /// Places `other`'s columns after this matrix's columns.
    pub fn hstack(&self, other: &Self) -> Result<Self> {
        if self.rows() != other.rows() {
            return Err(Error::shape("hstack", self.shape(), other.shape()));
        }
        let stacked = ndarray::concatenate(Axis(1), &[self.data.view(), other.data.view()])
            .expect("row counts checked");
        Ok(Self::from_array_unchecked(stacked))
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols() != rhs.rows() {
            return Err(Error::shape("matmul", self.shape(), rhs.shape()));
        }
        Ok(Self::from_array_unchecked(self.data.dot(&rhs.data)))
    }

    pub fn hadamard(&self, rhs: &Self) -> Result<Self> {
        self.same_shape("hadamard", rhs)?;
        Ok(Self::from_array_unchecked(&self.data * &rhs.data))
    }

    /// Entrywise `self / (den + eps)`.
    pub fn hadamard_div(&self, den: &Self, eps: f64) -> Result<Self> {
        self.same_shape("hadamard_div", den)?;
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::Config(format!("division guard must be finite and >= 0, got {eps}")));
        }
        let mut out = self.data.clone();
        for (o, &d) in out.iter_mut().zip(den.data.iter()) {
            let q = *o / (d + eps);
            // 0/0 with eps == 0: no signal in either direction.
            *o = if q.is_nan() { 0.0 } else { q };
        }
        if let Some(((row, col), &value)) = out.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidEntry { row, col, value });
        }
        Ok(Self::from_array_unchecked(out))
    }

    /// Scales every column to sum to one and returns the original sums.
    ///
    /// A column summing to zero is replaced by the uniform column `1/rows`;
    /// its reported sum stays `0` so callers can detect the degeneracy.
    pub fn column_normalize(&self) -> (Self, Vec<f64>) {
        let mut out = self.data.clone();
        let sums = normalize_columns_in_place(&mut out);
        (Self::from_array_unchecked(out), sums)
    }

    /// Squared Frobenius distance `sum((y - yhat)^2)`.
    pub fn frobenius_loss(&self, yhat: &Self) -> Result<f64> {
        self.same_shape("frobenius_loss", yhat)?;
        Ok(squared_distance(&self.data.view(), &yhat.data.view()))
    }

    pub fn sum(&self) -> f64 {
        self.data.sum()
    }

    pub fn mean(&self) -> f64 {
        self.data.sum() / self.data.len() as f64
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        Self::new(&self.data * factor)
    }

    fn same_shape(&self, op: &'static str, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(op, self.shape(), other.shape()));
        }
        Ok(())
    }
}

impl TryFrom<Array2<f64>> for NonNegMatrix {
    type Error = Error;

    fn try_from(value: Array2<f64>) -> Result<Self> {
        Self::new(value)
    }
}

/// Serialized as `{ "rows": r, "cols": c, "data": [[...], ...] }`.
#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<Vec<f64>>,
}

impl Serialize for NonNegMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr {
            rows: self.rows(),
            cols: self.cols(),
            data: self.to_rows(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for NonNegMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(deserializer)?;
        let m = NonNegMatrix::from_rows(&repr.data).map_err(serde::de::Error::custom)?;
        if m.shape() != (repr.rows, repr.cols) {
            return Err(serde::de::Error::custom(format!(
                "declared shape {}x{} does not match data {}x{}",
                repr.rows,
                repr.cols,
                m.rows(),
                m.cols()
            )));
        }
        Ok(m)
    }
}

pub(crate) fn normalize_columns_in_place(m: &mut Array2<f64>) -> Vec<f64> {
    let rows = m.nrows() as f64;
    let mut sums = Vec::with_capacity(m.ncols());
    for mut col in m.columns_mut() {
        let s: f64 = col.sum();
        sums.push(s);
        if s > 0.0 {
            col.mapv_inplace(|v| v / s);
        } else {
            col.fill(1.0 / rows);
        }
    }
    sums
}

pub(crate) fn squared_distance(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}
