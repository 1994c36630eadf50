//! Feature extractors mapping `(B, 3, H, W)` images to `(B, feature_dim)`.

mod conv;
mod tiny;
mod transformer;

use std::collections::HashMap;
use std::path::Path;

use candle_core::Tensor;
use serde::Serialize;

use super::config::{BackboneConfig, BackboneKind};
use super::params::{ParamSpec, ParamStore};
use crate::tensorfile::{self, TensorFile};
use crate::{Error, Result};

pub(crate) use tiny::TINY_STRIDE;

/// Prefix of backbone parameters inside a full model.
pub const BACKBONE_PREFIX: &str = "backbone.";

/// What a built extractor reports about itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BackboneSummary {
    pub kind: BackboneKind,
    pub attention_heads: usize,
    /// Transformer blocks or residual blocks.
    pub blocks: usize,
    pub feature_dim: usize,
    pub image_size: usize,
}

pub trait FeatureExtractor: Send + Sync {
    fn features(&self, images: &Tensor) -> Result<Tensor>;
    fn summary(&self) -> BackboneSummary;
}

/// Parameter specs of the executed part of a backbone, without prefix.
pub fn backbone_specs(config: &BackboneConfig) -> Vec<ParamSpec> {
    match config.kind {
        BackboneKind::Vit | BackboneKind::MaeEncoder => transformer::encoder_specs(config),
        BackboneKind::ConvResidual => conv::specs(config),
        BackboneKind::TinyTest => tiny::specs(config),
    }
}

/// Scalar parameter count of the executed backbone, computed without
/// allocating it.
pub fn backbone_parameter_count(config: &BackboneConfig) -> usize {
    backbone_specs(config).iter().map(ParamSpec::numel).sum()
}

/// Specs that a pretrained file must carry but that are never executed
/// (the masked-autoencoder decoder).
pub fn validation_only_specs(config: &BackboneConfig) -> Vec<ParamSpec> {
    match (config.kind, &config.decoder) {
        (BackboneKind::MaeEncoder, Some(decoder)) => transformer::decoder_specs(config, decoder),
        _ => Vec::new(),
    }
}

pub(crate) fn construct(
    config: &BackboneConfig,
    store: &ParamStore,
    prefix: &str,
) -> Result<Box<dyn FeatureExtractor>> {
    Ok(match config.kind {
        BackboneKind::Vit | BackboneKind::MaeEncoder => {
            Box::new(transformer::Encoder::load(config, store, prefix)?)
        }
        BackboneKind::ConvResidual => Box::new(conv::ConvResidual::load(config, store, prefix)?),
        BackboneKind::TinyTest => Box::new(tiny::Tiny::load(config, store, prefix)?),
    })
}

/// A standalone feature extractor together with its parameters. For the
/// masked-autoencoder kind the store also holds the (unused) decoder so
/// that exported files are accepted as pretrained weights.
pub struct Backbone {
    pub params: ParamStore,
    net: Box<dyn FeatureExtractor>,
}

impl Backbone {
    pub fn features(&self, images: &Tensor) -> Result<Tensor> {
        self.net.features(images)
    }

    pub fn summary(&self) -> BackboneSummary {
        self.net.summary()
    }

    /// Writes the parameters, unprefixed, in the layout
    /// `pretrained_weights` expects.
    pub fn save_pretrained(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = tensorfile::serialize(&self.params.to_host()?, HashMap::new())?;
        tensorfile::write_atomic(path.as_ref(), &bytes)
    }
}

/// Builds a backbone, loading `pretrained_weights` when configured.
pub fn build_backbone(config: &BackboneConfig, seed: u64) -> Result<Backbone> {
    config.validate()?;
    let mut specs = backbone_specs(config);
    specs.extend(validation_only_specs(config));
    let params = ParamStore::init(&specs, seed)?;
    if let Some(path) = &config.pretrained_weights {
        load_pretrained(config, &params, "", path)?;
    }
    let net = construct(config, &params, "")?;
    Ok(Backbone { params, net })
}

/// Copies pretrained backbone arrays from a safetensors file into `store`.
///
/// Every expected array (including validation-only decoder arrays) is
/// checked before anything is written; all problems are reported at once.
pub(crate) fn load_pretrained(
    config: &BackboneConfig,
    store: &ParamStore,
    prefix: &str,
    path: &Path,
) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    let file = TensorFile::parse(&bytes)
        .map_err(|e| Error::Load(format!("{}: not a valid weights file: {e}", path.display())))?;
    let executed = backbone_specs(config);
    let mut problems = Vec::new();
    for spec in executed.iter().chain(validation_only_specs(config).iter()) {
        match file.shape(&spec.name) {
            None => problems.push(format!("{}: missing", spec.name)),
            Some(shape) if shape != spec.shape => problems.push(format!(
                "{}: expected {:?}, found {:?}",
                spec.name, spec.shape, shape
            )),
            Some(_) => {}
        }
    }
    if !problems.is_empty() {
        return Err(Error::Load(format!(
            "{} does not match the {:?} architecture: {}",
            path.display(),
            config.kind,
            problems.join("; ")
        )));
    }
    for spec in &executed {
        let data = file.read_f32(&spec.name).map_err(Error::Load)?;
        store.set_host(&format!("{prefix}{}", spec.name), data)?;
    }
    Ok(())
}
