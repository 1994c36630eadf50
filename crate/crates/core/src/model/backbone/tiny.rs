use candle_core::Tensor;

use super::{BackboneSummary, FeatureExtractor};
use crate::model::config::BackboneConfig;
use crate::model::layers::{Conv2d, Linear};
use crate::model::params::{linear_specs, Init, ParamSpec, ParamStore};
use crate::Result;

pub(crate) const TINY_STRIDE: usize = 4;
pub(crate) const TINY_CHANNELS: usize = 16;

pub(super) fn specs(c: &BackboneConfig) -> Vec<ParamSpec> {
    let conv_fan_in = 3 * TINY_STRIDE * TINY_STRIDE;
    let mut s = Vec::new();
    s.extend(Conv2d::specs("conv", 3, TINY_CHANNELS, TINY_STRIDE, Init::fan_in(conv_fan_in)));
    s.extend(linear_specs("proj", TINY_CHANNELS, c.feature_dim, Init::fan_in(TINY_CHANNELS)));
    s
}

/// `proj(mean_hw(relu(conv4x4/4(x))))`.
pub(super) struct Tiny {
    config: BackboneConfig,
    conv: Conv2d,
    proj: Linear,
}

impl Tiny {
    pub fn load(config: &BackboneConfig, store: &ParamStore, prefix: &str) -> Result<Self> {
        Ok(Self {
            config: config.clone(),
            conv: Conv2d::load(store, &format!("{prefix}conv"), TINY_STRIDE, 0)?,
            proj: Linear::load(store, &format!("{prefix}proj"))?,
        })
    }
}

impl FeatureExtractor for Tiny {
    fn features(&self, images: &Tensor) -> Result<Tensor> {
        let pooled = self.conv.forward(images)?.relu()?.mean((2, 3))?;
        self.proj.forward(&pooled)
    }

    fn summary(&self) -> BackboneSummary {
        BackboneSummary {
            kind: self.config.kind,
            attention_heads: 0,
            blocks: 1,
            feature_dim: self.config.feature_dim,
            image_size: self.config.image_size,
        }
    }
}
