use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use candle_core::Tensor;

use super::checkpoint::Checkpoint;
use super::loss::{loss_gradient, LossBreakdown};
use super::optim::{make_optimizer, RmsProp, RmsPropConfig};
use super::{EpochRecord, TrainConfig, TrainHistory};
use crate::dataio::{ImageSet, Split, Subset};
use crate::evaluation::evaluate;
use crate::model::{to_rows, NutritionModel, HEAD_PREFIX};
use crate::{Error, Result, NUM_TASKS};

/// File names written into [`FitOptions::checkpoint_dir`].
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

/// State to continue an interrupted run from.
pub struct Resume {
    pub last: Checkpoint,
    pub best: Checkpoint,
}

#[derive(Default)]
pub struct FitOptions<'a> {
    /// Where `last.ckpt` (every epoch) and `best.ckpt` (on improvement)
    /// are written.
    pub checkpoint_dir: Option<PathBuf>,
    /// Receives one JSON line per epoch.
    pub log: Option<&'a mut dyn Write>,
    pub resume: Option<Resume>,
}

#[derive(Debug)]
pub struct FitOutcome {
    /// The model after the last epoch run.
    pub model: NutritionModel,
    pub history: TrainHistory,
    /// State at the epoch with the lowest validation combined MAE.
    pub best: Checkpoint,
}

/// Trains `model` on the train split of `data`, validating every epoch.
///
/// Batches are reshuffled each epoch as a function of `(config.seed,
/// epoch)`. The best checkpoint is the one with strictly lowest validation
/// combined MAE; training stops after `early_stop_patience` epochs without
/// improvement. A non-finite loss aborts with [`Error::Divergence`].
pub fn fit(
    model: NutritionModel,
    data: &ImageSet,
    config: &TrainConfig,
    mut options: FitOptions<'_>,
) -> Result<FitOutcome> {
    config.validate()?;
    if data.resolution() != model.image_size() {
        return Err(Error::Config(format!(
            "data resolution {} does not match model input size {}",
            data.resolution(),
            model.image_size()
        )));
    }

    let (model, mut optimizer, start_epoch, mut best_val, mut stale, mut history, mut best) =
        match options.resume.take() {
            Some(Resume { last, best }) => {
                let model = last.model()?;
                let optimizer = last.optimizer(&model)?;
                (
                    model,
                    optimizer,
                    last.epoch,
                    last.best_val_combined_mae,
                    last.epochs_without_improvement,
                    last.history,
                    best,
                )
            }
            None => {
                let names: Vec<String> = model
                    .params()
                    .iter()
                    .map(|(n, _)| n.to_string())
                    .filter(|n| !config.freeze_backbone || n.starts_with(HEAD_PREFIX))
                    .collect();
                let optimizer = make_optimizer(
                    RmsPropConfig::from(config),
                    model.params(),
                    names.iter().map(String::as_str),
                )?;
                let history = TrainHistory::default();
                let best = Checkpoint::capture(&model, &optimizer, config, 0, None, 0, &history)?;
                (model, optimizer, 0, None, 0, history, best)
            }
        };

    if config.max_epochs == 0 || start_epoch >= config.max_epochs {
        return Ok(FitOutcome { model, history, best });
    }
    for split in [Split::Train, Split::Val] {
        if model_split_len(data, split)? == 0 {
            return Err(Error::EmptySplit(format!("no samples in split `{}`", split.name())));
        }
    }

    for epoch in start_epoch + 1..=config.max_epochs {
        let started = Instant::now();
        let train = train_epoch(&model, &mut optimizer, data, config, epoch)?;
        let val = evaluate(&model, data, Subset::Split(Split::Val), config.batch_size)
            .map_err(|e| match e {
                Error::Divergence { .. } => Error::Divergence { epoch, step: 0 },
                other => other,
            })?;

        let improved = best_val.is_none_or(|b| val.combined_mae < b);
        if improved {
            best_val = Some(val.combined_mae);
            stale = 0;
        } else {
            stale += 1;
        }
        let record = EpochRecord {
            epoch,
            train,
            val,
            seconds: started.elapsed().as_secs_f64(),
        };
        if let Some(log) = options.log.as_mut() {
            writeln!(log, "{}", record.log_line())
                .map_err(|e| Error::file("<training log>", e))?;
        }
        history.epochs.push(record);

        let last = Checkpoint::capture(&model, &optimizer, config, epoch, best_val, stale, &history)?;
        if let Some(dir) = &options.checkpoint_dir {
            last.save(dir.join(LAST_CHECKPOINT))?;
        }
        if improved {
            if let Some(dir) = &options.checkpoint_dir {
                last.save(dir.join(BEST_CHECKPOINT))?;
            }
            best = last;
        }
        if stale > 0 && stale >= config.early_stop_patience {
            break;
        }
    }
    Ok(FitOutcome { model, history, best })
}

fn model_split_len(data: &ImageSet, split: Split) -> Result<usize> {
    Ok(data.manifest().indices(Subset::Split(split))?.len())
}

fn train_epoch(
    model: &NutritionModel,
    optimizer: &mut RmsProp,
    data: &ImageSet,
    config: &TrainConfig,
    epoch: usize,
) -> Result<LossBreakdown> {
    let mut sums = [0.0f64; NUM_TASKS];
    let mut count = 0usize;
    let batches = data.batches(
        Subset::Split(Split::Train),
        config.batch_size,
        true,
        config.seed,
        epoch as u64,
    )?;
    for (step, batch) in batches.enumerate() {
        let batch = batch?;
        let preds_t = if config.freeze_backbone {
            model.forward_frozen_backbone(&batch.images)?
        } else {
            model.forward(&batch.images)?
        };
        let preds = to_rows(&preds_t.detach())?;
        let diverged = || Error::Divergence { epoch, step: step + 1 };
        if preds.iter().flatten().any(|v| !v.is_finite()) {
            return Err(diverged());
        }
        for (y, p) in batch.targets.iter().zip(&preds) {
            for k in 0..NUM_TASKS {
                sums[k] += (y[k] - p[k]).abs();
            }
        }
        count += batch.len();

        let grad = loss_gradient(&batch.targets, &preds)?;
        let grad: Vec<f32> = grad.iter().flatten().map(|&g| g as f32).collect();
        let grad = Tensor::from_vec(grad, (batch.len(), NUM_TASKS), preds_t.device())?;
        // d/dpreds of sum(preds * grad) is exactly `grad`.
        let surrogate = (&preds_t * &grad)?.sum_all()?;
        let grads = surrogate.backward()?;
        optimizer.step(model.params(), &grads)?;
    }
    let loss = LossBreakdown::from_abs_sums(sums, count);
    if !loss.is_finite() {
        return Err(Error::Divergence { epoch, step: 0 });
    }
    Ok(loss)
}
