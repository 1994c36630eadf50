//! The multitask network: backbone, shared layers, five regression heads.

pub mod backbone;
mod config;
mod head;
pub(crate) mod layers;
mod params;

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Tensor};

pub use self::backbone::{
    backbone_parameter_count, build_backbone, Backbone, BackboneSummary, FeatureExtractor, BACKBONE_PREFIX,
};
pub use self::config::{
    BackboneConfig, BackboneKind, DecoderConfig, HeadTopology, ModelConfig, Pooling,
};
pub use self::head::{head_parameter_count, head_specs, HEAD_PREFIX};
pub use self::params::{Init, ParamSpec, ParamStore};

use self::head::Head;
use crate::tensorfile::{self, HostArray, TensorFile};
use crate::{Error, Result, NUM_TASKS};

const WEIGHTS_FORMAT: &str = "nutripred-weights";
const WEIGHTS_VERSION: &str = "1";

/// Which parameters to count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    All,
    HeadOnly,
    BackboneOnly,
}

/// Every parameter spec of a model, prefixed, in construction order.
pub fn model_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let mut specs: Vec<ParamSpec> = backbone::backbone_specs(&config.backbone)
        .into_iter()
        .map(|s| s.prefixed(BACKBONE_PREFIX))
        .collect();
    specs.extend(head_specs(config.backbone.feature_dim, &config.head));
    specs
}

pub struct NutritionModel {
    config: ModelConfig,
    params: ParamStore,
    backbone: Box<dyn FeatureExtractor>,
    head: Head,
}

impl std::fmt::Debug for NutritionModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NutritionModel")
            .field("config", &self.config)
            .field("parameters", &self.parameter_count(Scope::All))
            .finish()
    }
}

/// Builds a freshly initialised model (backbone weights loaded from
/// `pretrained_weights` when configured).
pub fn build_model(config: &ModelConfig) -> Result<NutritionModel> {
    config.validate()?;
    let params = ParamStore::init(&model_specs(config), config.seed)?;
    if let Some(path) = &config.backbone.pretrained_weights {
        backbone::load_pretrained(&config.backbone, &params, BACKBONE_PREFIX, path)?;
    }
    NutritionModel::assemble(config.clone(), params)
}

/// `(B, 3, H, W)` images to `(B, 5)` predictions.
pub fn forward(model: &NutritionModel, images: &Tensor) -> Result<Tensor> {
    model.forward(images)
}

pub fn parameter_count(model: &NutritionModel, scope: Scope) -> usize {
    model.parameter_count(scope)
}

impl NutritionModel {
    fn assemble(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let backbone = backbone::construct(&config.backbone, &params, BACKBONE_PREFIX)?;
        let head = Head::load(&config.head, &params)?;
        Ok(Self {
            config,
            params,
            backbone,
            head,
        })
    }

    /// Builds a model whose parameters are taken from `arrays`; every spec
    /// must be present with the right shape.
    pub(crate) fn from_arrays(
        config: ModelConfig,
        lookup: impl Fn(&str) -> Option<(Vec<usize>, Vec<f32>)>,
    ) -> std::result::Result<Self, String> {
        config.validate().map_err(|e| e.to_string())?;
        let specs = model_specs(&config);
        // Validate everything before allocating, so memory stays bounded by
        // what the source actually holds.
        let mut values = Vec::with_capacity(specs.len());
        let mut problems = Vec::new();
        for spec in &specs {
            match lookup(&spec.name) {
                None => problems.push(format!("{}: missing", spec.name)),
                Some((shape, _)) if shape != spec.shape => problems.push(format!(
                    "{}: expected {:?}, found {:?}",
                    spec.name, spec.shape, shape
                )),
                Some((_, data)) if data.iter().any(|v| !v.is_finite()) => {
                    problems.push(format!("{}: non-finite values", spec.name))
                }
                Some((_, data)) => values.push(data),
            }
        }
        if !problems.is_empty() {
            return Err(problems.join("; "));
        }
        let zeroed: Vec<ParamSpec> = specs.iter().map(|s| ParamSpec { init: Init::Zeros, ..s.clone() }).collect();
        let store = ParamStore::init(&zeroed, 0).map_err(|e| e.to_string())?;
        for (spec, data) in specs.iter().zip(values) {
            store.set_host(&spec.name, data).map_err(|e| e.to_string())?;
        }
        Self::assemble(config, store).map_err(|e| e.to_string())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn backbone_summary(&self) -> BackboneSummary {
        self.backbone.summary()
    }

    pub fn image_size(&self) -> usize {
        self.config.backbone.image_size
    }

    fn check_input(&self, images: &Tensor) -> Result<()> {
        let r = self.image_size();
        let dims = images.dims();
        let ok = dims.len() == 4 && dims[0] >= 1 && dims[1] == 3 && dims[2] == r && dims[3] == r;
        if !ok {
            return Err(Error::Shape {
                expected: format!("(B>=1, 3, {r}, {r})"),
                actual: format!("{dims:?}"),
            });
        }
        if images.dtype() != DType::F32 {
            return Err(Error::Shape {
                expected: "f32 images".to_string(),
                actual: format!("{:?}", images.dtype()),
            });
        }
        Ok(())
    }

    /// Predictions as a differentiable `(B, 5)` tensor.
    pub fn forward(&self, images: &Tensor) -> Result<Tensor> {
        self.check_input(images)?;
        let features = self.backbone.features(images)?;
        self.head.forward(&features)
    }

    /// Like [`forward`](Self::forward) but gradients stop at the features.
    pub fn forward_frozen_backbone(&self, images: &Tensor) -> Result<Tensor> {
        self.check_input(images)?;
        let features = self.backbone.features(images)?.detach();
        self.head.forward(&features)
    }

    /// Predictions copied to the host in task order.
    pub fn predict(&self, images: &Tensor) -> Result<Vec<[f64; NUM_TASKS]>> {
        let out = self.forward(&images.detach())?.detach();
        to_rows(&out)
    }

    pub fn features(&self, images: &Tensor) -> Result<Tensor> {
        self.check_input(images)?;
        self.backbone.features(images)
    }

    pub fn parameter_count(&self, scope: Scope) -> usize {
        match scope {
            Scope::All => self.params.count_with_prefix(""),
            Scope::HeadOnly => self.params.count_with_prefix(HEAD_PREFIX),
            Scope::BackboneOnly => self.params.count_with_prefix(BACKBONE_PREFIX),
        }
    }

    pub(crate) fn host_arrays(&self) -> Result<Vec<HostArray>> {
        self.params.to_host()
    }

    /// Writes all parameters and the model configuration to a safetensors file.
    pub fn save_weights(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut meta = HashMap::new();
        meta.insert("format".to_string(), WEIGHTS_FORMAT.to_string());
        meta.insert("version".to_string(), WEIGHTS_VERSION.to_string());
        meta.insert(
            "model_config".to_string(),
            serde_json::to_string(&self.config).expect("config serializes"),
        );
        let bytes = tensorfile::serialize(&self.host_arrays()?, meta)?;
        tensorfile::write_atomic(path.as_ref(), &bytes)
    }

    /// Reads a file written by [`save_weights`](Self::save_weights).
    pub fn load_weights(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::weights_from_bytes(&bytes)
    }

    pub fn weights_from_bytes(bytes: &[u8]) -> Result<Self> {
        let file = TensorFile::parse(bytes).map_err(Error::Load)?;
        match (file.metadata.get("format"), file.metadata.get("version")) {
            (Some(f), Some(v)) if f == WEIGHTS_FORMAT && v == WEIGHTS_VERSION => {}
            (f, v) => {
                return Err(Error::Load(format!(
                    "unsupported weights container (format {f:?}, version {v:?})"
                )))
            }
        }
        let config: ModelConfig = file
            .metadata
            .get("model_config")
            .ok_or_else(|| Error::Load("missing model_config".to_string()))
            .and_then(|s| serde_json::from_str(s).map_err(|e| Error::Load(e.to_string())))?;
        Self::from_arrays(config, |name| {
            let shape = file.shape(name)?;
            file.read_f32(name).ok().map(|d| (shape, d))
        })
        .map_err(Error::Load)
    }
}

pub(crate) fn to_rows(t: &Tensor) -> Result<Vec<[f64; NUM_TASKS]>> {
    let rows = t.to_dtype(DType::F64)?.to_vec2::<f64>()?;
    rows.into_iter()
        .map(|r| {
            <[f64; NUM_TASKS]>::try_from(r.as_slice()).map_err(|_| Error::Shape {
                expected: format!("{NUM_TASKS} columns"),
                actual: format!("{} columns", r.len()),
            })
        })
        .collect()
}
