//! CSV ingestion and min-max feature scaling.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature `(min, max)` recorded at load time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPair {
    pub min: f64,
    pub max: f64,
}

impl ScalingPair {
    /// Constant features map to 0. Values outside the recorded range are
    /// not clamped.
    pub fn apply(&self, v: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            (v - self.min) / span
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub label_column: Option<String>,
    pub id_column: Option<String>,
    /// Min-max scale the features to `[0, 1]`.
    pub scale: bool,
}

impl LoadOptions {
    pub fn scaled() -> Self {
        Self {
            scale: true,
            ..Self::default()
        }
    }

    pub fn with_label(mut self, name: impl Into<String>) -> Self {
        self.label_column = Some(name.into());
        self
    }

    pub fn with_id(mut self, name: impl Into<String>) -> Self {
        self.id_column = Some(name.into());
        self
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    /// `n x d`, one sample per row.
    pub samples: Array2<f64>,
    pub labels: Option<Vec<String>>,
    pub ids: Option<Vec<String>>,
    /// `None` when the features were kept raw.
    pub scaling: Option<Vec<ScalingPair>>,
    /// Rows dropped for missing values.
    pub dropped: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.samples.ncols()
    }

    /// Sample identifiers: the id column if present, else 1-based row numbers.
    pub fn sample_ids(&self) -> Vec<String> {
        match &self.ids {
            Some(ids) => ids.clone(),
            None => (1..=self.len()).map(|i| i.to_string()).collect(),
        }
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "NaN" | "nan")
}

/// Reads a headered CSV. Every column other than the label and id columns is
/// a numeric feature. Rows with any missing cell are dropped.
pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let data_err = |message: String| Error::Data {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_err(e.to_string()))?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let find = |name: &Option<String>, what: &str| -> Result<Option<usize>> {
        match name {
            None => Ok(None),
            Some(n) => headers
                .iter()
                .position(|h| h == n)
                .map(Some)
                .ok_or_else(|| data_err(format!("{what} column `{n}` not found"))),
        }
    };
    let label_col = find(&opts.label_column, "label")?;
    let id_col = find(&opts.id_column, "id")?;
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| Some(c) != label_col && Some(c) != id_col)
        .collect();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    let mut dropped = 0;
    let mut seen = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        seen += 1;
        if record.iter().any(is_missing) || record.len() < headers.len() {
            dropped += 1;
            continue;
        }
        for &c in &feature_cols {
            let cell = &record[c];
            let v: f64 = cell.parse().map_err(|_| {
                data_err(format!("row {}: column `{}` is not numeric: `{cell}`", r + 2, headers[c]))
            })?;
            if !v.is_finite() {
                return Err(data_err(format!("row {}: column `{}` is not finite", r + 2, headers[c])));
            }
            values.push(v);
        }
        if let Some(c) = label_col {
            labels.push(record[c].to_string());
        }
        if let Some(c) = id_col {
            ids.push(record[c].to_string());
        }
    }
    if seen == 0 {
        return Err(data_err("no data rows".into()));
    }
    let n = seen - dropped;
    if n == 0 {
        return Err(data_err(format!("all {seen} rows have missing values")));
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} row(s) with missing values", path.display());
    }

    let mut samples = Array2::from_shape_vec((n, feature_cols.len()), values)
        .expect("row width fixed by header");
    let scaling = opts.scale.then(|| fit_scaling(&samples));
    if let Some(pairs) = &scaling {
        apply_scaling(&mut samples, pairs)?;
    }
    Ok(Dataset {
        feature_names: feature_cols.iter().map(|&c| headers[c].clone()).collect(),
        samples,
        labels: label_col.map(|_| labels),
        ids: id_col.map(|_| ids),
        scaling,
        dropped,
    })
}

/// Reads the named feature columns (in that order) for prediction. Other
/// columns are ignored; missing rows are dropped. No scaling is applied.
pub fn load_features(
    path: impl AsRef<Path>,
    feature_names: &[String],
    id_column: Option<&str>,
    label_column: Option<&str>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let data_err = |message: String| Error::Data {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_err(e.to_string()))?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let position = |name: &str| headers.iter().position(|h| h == name);
    let feature_cols = feature_names
        .iter()
        .map(|n| position(n).ok_or_else(|| data_err(format!("feature column `{n}` not found"))))
        .collect::<Result<Vec<_>>>()?;
    let id_col = match id_column {
        Some(n) => Some(position(n).ok_or_else(|| data_err(format!("id column `{n}` not found")))?),
        None => None,
    };
    let label_col = match label_column {
        Some(n) => Some(position(n).ok_or_else(|| data_err(format!("label column `{n}` not found")))?),
        None => None,
    };
    let used: Vec<usize> = feature_cols.iter().copied().chain(id_col).chain(label_col).collect();

    let (mut values, mut ids, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    let (mut kept, mut dropped) = (0, 0);
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        if used.iter().any(|&c| record.get(c).is_none_or(is_missing)) {
            dropped += 1;
            continue;
        }
        kept += 1;
        for &c in &feature_cols {
            let cell = &record[c];
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| data_err(format!("row {}: column `{}` is not numeric: `{cell}`", r + 2, headers[c])))?;
            values.push(v);
        }
        if let Some(c) = id_col {
            ids.push(record[c].to_string());
        }
        if let Some(c) = label_col {
            labels.push(record[c].to_string());
        }
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} row(s) with missing values", path.display());
    }
    Ok(Dataset {
        feature_names: feature_names.to_vec(),
        samples: Array2::from_shape_vec((kept, feature_cols.len()), values).expect("row width fixed"),
        labels: label_col.map(|_| labels),
        ids: id_col.map(|_| ids),
        scaling: None,
        dropped,
    })
}

pub fn fit_scaling(samples: &Array2<f64>) -> Vec<ScalingPair> {
    samples
        .columns()
        .into_iter()
        .map(|col| ScalingPair {
            min: col.fold(f64::INFINITY, |a, &b| a.min(b)),
            max: col.fold(f64::NEG_INFINITY, |a, &b| a.max(b)),
        })
        .collect()
}

pub fn apply_scaling(samples: &mut Array2<f64>, pairs: &[ScalingPair]) -> Result<()> {
    if samples.ncols() != pairs.len() {
        return Err(Error::Length {
            what: "features vs scaling pairs",
            left: samples.ncols(),
            right: pairs.len(),
        });
    }
    for (mut col, pair) in samples.columns_mut().into_iter().zip(pairs) {
        col.mapv_inplace(|v| pair.apply(v));
    }
    Ok(())
}
