//! Model assembly and the cross-validation training harness.

mod batch;
mod model;
mod results;
mod train;

pub use batch::{batch_graphs, GraphBatch, Segment};
pub use model::{FlatModel, HierarchicalModel, Model};
pub use results::{load_result, persist_result, result_csv, CVResult, SCHEMA_VERSION};
pub use train::{evaluate_accuracy, grid_search, learning_rate_at, train_cv, TrainTrace};

use crate::error::{Error, Result};
use crate::layers::GnnVariant;
use crate::pooling::PoolKind;
use serde::{Deserialize, Serialize};

pub const GRID_HIDDEN: [usize; 3] = [16, 32, 64];
pub const GRID_BATCH: [usize; 2] = [32, 128];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpochSelect {
    /// Epoch with the best fold-averaged validation accuracy.
    Mean,
    /// Each fold reports its own best epoch.
    PerFold,
}

impl std::fmt::Display for EpochSelect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EpochSelect::Mean => "mean",
            EpochSelect::PerFold => "per-fold",
        })
    }
}

impl std::str::FromStr for EpochSelect {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(EpochSelect::Mean),
            "per-fold" | "perfold" => Ok(EpochSelect::PerFold),
            other => Err(Error::Config(format!("unknown epoch-select '{other}'"))),
        }
    }
}

/// Everything one training run needs. Defaults follow the protocol: Adam at
/// 0.01 halved every 50 epochs, hidden ∈ {16,32,64}, batch ∈ {32,128},
/// dropout 0.5 in the classifier, 10 folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub gnn: GnnVariant,
    pub pool: PoolKind,
    pub hidden: usize,
    pub batch_size: usize,
    /// f′ for the bilinear-mapping poolings.
    pub reduced_dim: Option<usize>,
    /// Heads per hierarchical block; `None` derives k from the dataset's
    /// average node count, halving per block.
    pub head_count: Option<usize>,
    /// `Some(b)` builds the hierarchical model with b blocks.
    pub blocks: Option<usize>,
    pub epochs: usize,
    pub base_lr: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub dropout: f64,
    pub folds: usize,
    pub seed: u64,
    pub epoch_select: EpochSelect,
    /// Set when hidden/batch were overridden explicitly off the grid.
    #[serde(default)]
    pub allow_off_grid: bool,
}

impl ExperimentConfig {
    pub fn new(dataset: impl Into<String>, gnn: GnnVariant, pool: PoolKind) -> Self {
        ExperimentConfig {
            dataset: dataset.into(),
            gnn,
            pool,
            hidden: 32,
            batch_size: 32,
            reduced_dim: None,
            head_count: None,
            blocks: None,
            epochs: 300,
            base_lr: 0.01,
            lr_decay: 0.5,
            lr_decay_every: 50,
            dropout: 0.5,
            folds: 10,
            seed: 0,
            epoch_select: EpochSelect::Mean,
            allow_off_grid: false,
        }
    }

    pub fn model_name(&self) -> String {
        format!("{}+{}", self.gnn, self.pool)
    }

    pub fn is_hierarchical(&self) -> bool {
        self.blocks.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "hidden and batch size must be positive".into(),
            ));
        }
        if !self.allow_off_grid {
            if !GRID_HIDDEN.contains(&self.hidden) {
                return Err(Error::Config(format!(
                    "hidden {} is outside the grid {:?}; pass it explicitly to override",
                    self.hidden, GRID_HIDDEN
                )));
            }
            if !GRID_BATCH.contains(&self.batch_size) {
                return Err(Error::Config(format!(
                    "batch size {} is outside the grid {:?}; pass it explicitly to override",
                    self.batch_size, GRID_BATCH
                )));
            }
        }
        if matches!(self.pool, PoolKind::SopoolBimap | PoolKind::CovPool)
            && self.reduced_dim.is_none()
        {
            return Err(Error::Config(format!(
                "{} requires f' (--fprime)",
                self.pool
            )));
        }
        if let Some(blocks) = self.blocks {
            if blocks == 0 {
                return Err(Error::Config("blocks must be at least 1".into()));
            }
            if !self.allow_off_grid && blocks > 3 {
                return Err(Error::Config(format!(
                    "blocks {blocks} is outside {{1, 2, 3}}; pass it explicitly to override"
                )));
            }
            if self.pool != PoolKind::SopoolMattn {
                return Err(Error::Config(format!(
                    "hierarchical models require --pool sopool-mattn, got {}",
                    self.pool
                )));
            }
            if !self.gnn.is_sum_family() {
                return Err(Error::Config(format!(
                    "hierarchical blocks run on weighted dense adjacencies; gnn '{}' is not sum-family",
                    self.gnn
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        Ok(())
    }
}
