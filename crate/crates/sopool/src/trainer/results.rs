//! Cross-validation results: JSON persistence with schema versioning and a
//! load-time integrity check, plus the one-row CSV export.

use super::{EpochSelect, ExperimentConfig};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CVResult {
    pub schema_version: u32,
    pub dataset: String,
    pub model: String,
    pub config: ExperimentConfig,
    /// `[fold][epoch]` validation accuracy.
    pub per_fold_epoch_accuracy: Vec<Vec<f64>>,
    /// Epoch with the best fold-averaged validation accuracy.
    pub selected_epoch: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub wall_seconds: f64,
}

impl CVResult {
    /// Recomputes (mean, std) from the per-fold curves under the config's
    /// epoch-selection rule. Std is the population standard deviation.
    pub fn recompute(&self) -> (f64, f64) {
        let per_fold: Vec<f64> = match self.config.epoch_select {
            EpochSelect::Mean => self
                .per_fold_epoch_accuracy
                .iter()
                .map(|curve| curve[self.selected_epoch])
                .collect(),
            EpochSelect::PerFold => self
                .per_fold_epoch_accuracy
                .iter()
                .map(|curve| curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
                .collect(),
        };
        mean_std(&per_fold)
    }

    /// Equality of everything except wall time.
    pub fn results_equal(&self, other: &CVResult) -> bool {
        self.schema_version == other.schema_version
            && self.dataset == other.dataset
            && self.model == other.model
            && self.config == other.config
            && self.per_fold_epoch_accuracy == other.per_fold_epoch_accuracy
            && self.selected_epoch == other.selected_epoch
            && self.mean_accuracy == other.mean_accuracy
            && self.std_accuracy == other.std_accuracy
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} {}: {:.4}±{:.4}",
            self.dataset, self.model, self.mean_accuracy, self.std_accuracy
        )
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn persist_result(result: &CVResult, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(result)
        .map_err(|e| Error::Integrity(format!("serialization failed: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_result(path: &Path) -> Result<CVResult> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let result: CVResult = serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: path.display().to_string(),
        reason: e.to_string(),
    })?;
    if result.schema_version != SCHEMA_VERSION {
        return Err(Error::Schema {
            found: result.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    let (mean, std) = result.recompute();
    if (mean - result.mean_accuracy).abs() > 1e-9 || (std - result.std_accuracy).abs() > 1e-9 {
        return Err(Error::Integrity(format!(
            "stored mean/std {:.6}/{:.6} do not match recomputed {:.6}/{:.6}",
            result.mean_accuracy, result.std_accuracy, mean, std
        )));
    }
    Ok(result)
}

/// Fixed CSV schema: dataset, model, mean_accuracy, std_accuracy.
pub fn result_csv(result: &CVResult) -> String {
    format!(
        "dataset,model,mean_accuracy,std_accuracy\n{},{},{:.6},{:.6}\n",
        result.dataset, result.model, result.mean_accuracy, result.std_accuracy
    )
}
