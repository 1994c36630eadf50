//! Per-task and combined MAE on a data subset, and comparison tables.

mod table;

pub use self::table::{render_table, ComparisonTable, TableFormat};

use serde::{Deserialize, Serialize};

use crate::dataio::{ImageSet, Subset};
use crate::model::NutritionModel;
use crate::{Error, Result, NUM_TASKS, TASK_NAMES};

/// Per-task MAE in task order, keyed by task name when serialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskValues {
    pub calories: f64,
    pub mass: f64,
    pub protein: f64,
    pub fat: f64,
    pub carbohydrates: f64,
}

impl From<[f64; NUM_TASKS]> for TaskValues {
    fn from(v: [f64; NUM_TASKS]) -> Self {
        Self {
            calories: v[0],
            mass: v[1],
            protein: v[2],
            fat: v[3],
            carbohydrates: v[4],
        }
    }
}

impl From<TaskValues> for [f64; NUM_TASKS] {
    fn from(t: TaskValues) -> Self {
        [t.calories, t.mass, t.protein, t.fat, t.carbohydrates]
    }
}

/// Evaluation of one model on one subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_label: String,
    pub per_task_mae: TaskValues,
    pub combined_mae: f64,
    pub sample_count: usize,
}

impl EvalReport {
    pub fn new(model_label: impl Into<String>, per_task: [f64; NUM_TASKS], sample_count: usize) -> Result<Self> {
        Ok(Self {
            model_label: model_label.into(),
            per_task_mae: per_task.into(),
            combined_mae: combined_mae(&per_task)?,
            sample_count,
        })
    }

    pub fn per_task(&self) -> [f64; NUM_TASKS] {
        self.per_task_mae.into()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.model_label = label.into();
        self
    }
}

/// Plain sum of per-task MAEs.
pub fn combined_mae(per_task: &[f64; NUM_TASKS]) -> Result<f64> {
    if let Some(k) = per_task.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Argument(format!(
            "per-task MAE for {} must be finite and non-negative, got {}",
            TASK_NAMES[k], per_task[k]
        )));
    }
    Ok(per_task.iter().sum())
}

/// `100 · (baseline − candidate) / baseline`.
pub fn improvement_percent(baseline: f64, candidate: f64) -> Result<f64> {
    if baseline <= 0.0 || !baseline.is_finite() || !candidate.is_finite() {
        return Err(Error::Argument(format!(
            "baseline must be positive and finite, got {baseline}"
        )));
    }
    Ok(100.0 * (baseline - candidate) / baseline)
}

/// Label like `vit/full` derived from a model's configuration.
pub fn default_label(model: &NutritionModel) -> String {
    let c = model.config();
    let kind = serde_json::to_value(c.backbone.kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    format!("{kind}/{}", c.head.name())
}

/// MAE of every task over all samples of `subset`.
///
/// Absolute errors are accumulated in manifest order and divided by the
/// sample count once, so the result does not depend on `batch_size`.
pub fn evaluate(model: &NutritionModel, data: &ImageSet, subset: Subset, batch_size: usize) -> Result<EvalReport> {
    let mut sums = [0.0f64; NUM_TASKS];
    let mut count = 0usize;
    for batch in data.batches(subset, batch_size, false, 0, 0)? {
        let batch = batch?;
        let preds = model.predict(&batch.images)?;
        for (y, p) in batch.targets.iter().zip(&preds) {
            for k in 0..NUM_TASKS {
                sums[k] += (y[k] - p[k]).abs();
            }
        }
        count += batch.len();
    }
    let per_task = sums.map(|s| s / count as f64);
    if per_task.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { epoch: 0, step: 0 });
    }
    EvalReport::new(default_label(model), per_task, count)
}
