#![allow(dead_code)]

use std::path::Path;

use nutripred::dataio::{load_manifest, split_dataset, DatasetManifest, ImageSet, SplitFractions};
use nutripred::model::{BackboneConfig, BackboneKind, HeadTopology, ModelConfig};
use nutripred::synthdata::{generate, SynthSpec, MANIFEST_FILE};
use nutripred::training::{EpochRecord, TrainConfig};

pub const RES: usize = 16;

/// Writes a synthetic set into `dir` and returns the loaded manifest.
pub fn synth(dir: &Path, count: usize, resolution: usize, seed: u64) -> DatasetManifest {
    let spec = SynthSpec { count, resolution, seed, ..SynthSpec::default() };
    generate(&spec, dir).unwrap();
    load_manifest(dir.join(MANIFEST_FILE)).unwrap()
}

pub fn split_set(manifest: &DatasetManifest, config: &TrainConfig, resolution: usize) -> ImageSet {
    ImageSet::new(split_dataset(manifest, config.split, config.seed).unwrap(), resolution).unwrap()
}

pub fn tiny_model(resolution: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        backbone: BackboneConfig::new(BackboneKind::TinyTest)
            .with_image_size(resolution)
            .with_feature_dim(16),
        head: HeadTopology::Compressed { shared_widths: vec![32] },
        seed,
    }
}

pub fn quick_train(max_epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        batch_size: 8,
        max_epochs,
        early_stop_patience: 1000,
        split: SplitFractions::new(0.5, 0.25, 0.25).unwrap(),
        ..TrainConfig::default()
    }
}

/// Loss values of a history with timings removed.
pub fn losses(history: &[EpochRecord]) -> Vec<(usize, [f64; 5], [f64; 5])> {
    history
        .iter()
        .map(|r| (r.epoch, r.train.per_task, r.val.per_task()))
        .collect()
}
