//! Multitask MAE objective, RMSProp optimizer, epoch loop and checkpoints.

mod checkpoint;
mod fit;
mod loss;
mod optim;

pub use self::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use self::fit::{fit, FitOptions, FitOutcome, Resume, BEST_CHECKPOINT, LAST_CHECKPOINT};
pub use self::loss::{loss_gradient, mae, multitask_loss, LossBreakdown};
pub use self::optim::{make_optimizer, RmsProp, RmsPropConfig};

use serde::{Deserialize, Serialize};

use crate::dataio::SplitFractions;
use crate::evaluation::{EvalReport, TaskValues};
use crate::{Error, Result};

/// Optimizer and loop settings.
///
/// Defaults: RMSProp with learning rate 1e-4, squared-gradient discount
/// 0.9, epsilon 1.0, momentum 0.9; batch size 32. `weight_decay` is a
/// separate L2 coefficient and defaults to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub rms_discount: f64,
    pub epsilon: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Train only the head; backbone parameters stay fixed.
    pub freeze_backbone: bool,
    /// Split applied to the manifest, seeded with `seed`.
    pub split: SplitFractions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            rms_discount: 0.9,
            epsilon: 1.0,
            momentum: 0.9,
            weight_decay: 0.0,
            batch_size: 32,
            max_epochs: 100,
            early_stop_patience: 10,
            seed: 0,
            freeze_backbone: false,
            split: SplitFractions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        RmsPropConfig::from(self).validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".to_string()));
        }
        self.split
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }
}

/// One epoch of training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Sample-weighted MAE of the predictions made while training.
    pub train: LossBreakdown,
    pub val: EvalReport,
    pub seconds: f64,
}

impl EpochRecord {
    /// One JSON-lines log entry. Wall-clock time is left out so that
    /// runs with the same seed log identical bytes.
    pub fn log_line(&self) -> String {
        serde_json::json!({
            "epoch": self.epoch,
            "train_mae": TaskValues::from(self.train.per_task),
            "train_combined_mae": self.train.total,
            "val_mae": self.val.per_task_mae,
            "val_combined_mae": self.val.combined_mae,
        })
        .to_string()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}
