use candle_core::Tensor;

use super::{BackboneSummary, FeatureExtractor};
use crate::model::config::BackboneConfig;
use crate::model::layers::Conv2d;
use crate::model::params::{Init, ParamSpec, ParamStore};
use crate::Result;

const STAGES: usize = 4;

/// Channel widths of the four stages: F/8, F/4, F/2, F.
fn stage_widths(c: &BackboneConfig) -> [usize; STAGES] {
    let f = c.feature_dim;
    [f / 8, f / 4, f / 2, f]
}

/// Residual blocks per stage; the remainder goes to the earliest stages.
fn stage_depths(c: &BackboneConfig) -> [usize; STAGES] {
    let mut d = [c.hidden_layers / STAGES; STAGES];
    for slot in d.iter_mut().take(c.hidden_layers % STAGES) {
        *slot += 1;
    }
    d
}

pub(super) fn specs(c: &BackboneConfig) -> Vec<ParamSpec> {
    let widths = stage_widths(c);
    let mut s = Vec::new();
    s.extend(Conv2d::specs("stem", 3, widths[0], 3, Init::Zeros));
    for (i, (&w, &depth)) in widths.iter().zip(stage_depths(c).iter()).enumerate() {
        if i > 0 {
            s.extend(Conv2d::specs(&format!("stages.{i}.down"), widths[i - 1], w, 3, Init::Zeros));
        }
        for j in 0..depth {
            s.extend(Conv2d::specs(&format!("stages.{i}.blocks.{j}.conv1"), w, w, 3, Init::Zeros));
            s.extend(Conv2d::specs(&format!("stages.{i}.blocks.{j}.conv2"), w, w, 3, Init::Zeros));
        }
    }
    s
}

struct ResBlock {
    conv1: Conv2d,
    conv2: Conv2d,
}

impl ResBlock {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.conv1.forward(x)?.relu()?;
        Ok((x + self.conv2.forward(&h)?)?.relu()?)
    }
}

struct Stage {
    down: Option<Conv2d>,
    blocks: Vec<ResBlock>,
}

/// Stride-2 stem, then four stages (stride-2 transition between stages)
/// of 3×3 residual blocks; features are the globally averaged last stage.
pub(super) struct ConvResidual {
    config: BackboneConfig,
    stem: Conv2d,
    stages: Vec<Stage>,
}

impl ConvResidual {
    pub fn load(config: &BackboneConfig, store: &ParamStore, prefix: &str) -> Result<Self> {
        let p = |n: String| format!("{prefix}{n}");
        let mut stages = Vec::with_capacity(STAGES);
        for (i, &depth) in stage_depths(config).iter().enumerate() {
            let down = if i > 0 {
                Some(Conv2d::load(store, &p(format!("stages.{i}.down")), 2, 1)?)
            } else {
                None
            };
            let blocks = (0..depth)
                .map(|j| {
                    Ok(ResBlock {
                        conv1: Conv2d::load(store, &p(format!("stages.{i}.blocks.{j}.conv1")), 1, 1)?,
                        conv2: Conv2d::load(store, &p(format!("stages.{i}.blocks.{j}.conv2")), 1, 1)?,
                    })
                })
                .collect::<Result<_>>()?;
            stages.push(Stage { down, blocks });
        }
        Ok(Self {
            config: config.clone(),
            stem: Conv2d::load(store, &p("stem".to_string()), 2, 1)?,
            stages,
        })
    }
}

impl FeatureExtractor for ConvResidual {
    fn features(&self, images: &Tensor) -> Result<Tensor> {
        let mut x = self.stem.forward(images)?.relu()?;
        for stage in &self.stages {
            if let Some(down) = &stage.down {
                x = down.forward(&x)?.relu()?;
            }
            for block in &stage.blocks {
                x = block.forward(&x)?;
            }
        }
        Ok(x.mean((2, 3))?)
    }

    fn summary(&self) -> BackboneSummary {
        BackboneSummary {
            kind: self.config.kind,
            attention_heads: 0,
            blocks: self.stages.iter().map(|s| s.blocks.len()).sum(),
            feature_dim: self.config.feature_dim,
            image_size: self.config.image_size,
        }
    }
}
