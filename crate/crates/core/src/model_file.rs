//! Versioned JSON model files.
//!
//! Floats are written with shortest round-trip formatting, so a reloaded
//! model predicts bit-for-bit what the saved one did.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::ScalingPair;
use crate::error::{Error, Result};
use crate::trinmf::{FitReport, TriNmfModel};

pub const FORMAT: &str = "nmflab-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Features explained by group covariates.
    Forward,
    /// Label matrix explained by feature covariates.
    Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub final_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: Option<u64>,
}

impl FitMetadata {
    pub fn from_report(report: &FitReport, seed: Option<u64>) -> Self {
        Self {
            final_loss: report.final_loss,
            iterations: report.iterations_run,
            converged: report.converged,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub mode: Mode,
    /// Input feature columns, in order.
    pub feature_names: Vec<String>,
    /// Scaling applied to inputs before building covariates.
    pub scaling: Option<Vec<ScalingPair>>,
    /// Group names for forward models, one per covariate row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_names: Option<Vec<String>>,
    /// Column holding class or group labels in the training file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_column: Option<String>,
    pub model: TriNmfModel,
    pub fit: FitMetadata,
}

impl ModelFile {
    pub fn new(
        mode: Mode,
        feature_names: Vec<String>,
        scaling: Option<Vec<ScalingPair>>,
        model: TriNmfModel,
        fit: FitMetadata,
    ) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            mode,
            feature_names,
            scaling,
            group_names: None,
            label_column: None,
            model,
            fit,
        }
    }

    pub fn with_group_names(mut self, names: Vec<String>) -> Self {
        self.group_names = Some(names);
        self
    }

    pub fn with_label_column(mut self, name: Option<String>) -> Self {
        self.label_column = name;
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("format").and_then(|v| v.as_str()) {
            Some(FORMAT) => {}
            other => return Err(Error::Format(format!("expected format `{FORMAT}`, found {other:?}"))),
        }
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Format("missing version".into()))?;
        if version != u64::from(VERSION) {
            return Err(Error::Version {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: VERSION,
            });
        }
        let file: ModelFile = serde_json::from_value(value)?;
        file.validate()
    }

    fn validate(self) -> Result<Self> {
        let m = &self.model;
        // Re-run the model invariants that plain deserialization skips.
        let model = TriNmfModel::new(
            m.basis().clone(),
            m.theta().clone(),
            m.design().clone(),
            m.class_names().map(<[String]>::to_vec),
        )?;
        if let Some(pairs) = &self.scaling {
            if pairs.len() != self.feature_names.len() {
                return Err(Error::Format("scaling pairs do not match feature names".into()));
            }
            if pairs.iter().any(|p| matches!(p.max.partial_cmp(&p.min), None | Some(std::cmp::Ordering::Less))) {
                return Err(Error::Format("scaling pair with max < min".into()));
            }
        }
        Ok(Self { model, ..self })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
