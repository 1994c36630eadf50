use std::collections::HashMap;
use std::path::Path;

use super::optim::{make_optimizer, RmsProp, MOMENTUM_PREFIX, SQUARE_AVG_PREFIX};
use super::{RmsPropConfig, TrainConfig, TrainHistory};
use crate::model::{model_specs, ModelConfig, NutritionModel};
use crate::tensorfile::{self, HostArray, TensorFile};
use crate::{Error, Result};

const FORMAT: &str = "nutripred-checkpoint";
const VERSION: &str = "1";
const PARAM_PREFIX: &str = "param/";

/// Complete training state at the end of an epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    /// Epochs completed (0 before training).
    pub epoch: usize,
    pub best_val_combined_mae: Option<f64>,
    pub epochs_without_improvement: usize,
    pub optimizer_steps: u64,
    pub history: TrainHistory,
    params: Vec<HostArray>,
    /// Names of the parameters the optimizer updates, in slot order.
    optimizer_params: Vec<String>,
    optimizer_state: Vec<HostArray>,
}

impl Checkpoint {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn capture(
        model: &NutritionModel,
        optimizer: &RmsProp,
        train_config: &TrainConfig,
        epoch: usize,
        best_val_combined_mae: Option<f64>,
        epochs_without_improvement: usize,
        history: &TrainHistory,
    ) -> Result<Self> {
        Ok(Self {
            model_config: model.config().clone(),
            train_config: train_config.clone(),
            epoch,
            best_val_combined_mae,
            epochs_without_improvement,
            optimizer_steps: optimizer.steps(),
            history: history.clone(),
            params: model.host_arrays()?,
            optimizer_params: optimizer.param_names().map(str::to_string).collect(),
            optimizer_state: optimizer.state_arrays(model.params())?,
        })
    }

    /// Parameter values by model parameter name.
    pub fn param(&self, name: &str) -> Option<&[f32]> {
        self.params
            .iter()
            .find(|a| a.name == name)
            .map(|a| a.data.as_slice())
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|a| a.name.as_str())
    }

    /// Rebuilds the model with the stored parameters.
    pub fn model(&self) -> Result<NutritionModel> {
        let index: HashMap<&str, &HostArray> =
            self.params.iter().map(|a| (a.name.as_str(), a)).collect();
        NutritionModel::from_arrays(self.model_config.clone(), |name| {
            index.get(name).map(|a| (a.shape.clone(), a.data.clone()))
        })
        .map_err(Error::Checkpoint)
    }

    /// Rebuilds the optimizer state for `model` (which should come from
    /// [`model`](Self::model)).
    pub fn optimizer(&self, model: &NutritionModel) -> Result<RmsProp> {
        let mut opt = make_optimizer(
            RmsPropConfig::from(&self.train_config),
            model.params(),
            self.optimizer_params.iter().map(String::as_str),
        )?;
        let find = |prefix: &str, name: &str| {
            let key = format!("{prefix}{name}");
            self.optimizer_state
                .iter()
                .find(|a| a.name == key)
                .map(|a| a.data.clone())
                .ok_or_else(|| Error::Checkpoint(format!("missing optimizer array `{key}`")))
        };
        for name in &self.optimizer_params {
            opt.restore_slot(name, find(SQUARE_AVG_PREFIX, name)?, find(MOMENTUM_PREFIX, name)?)?;
        }
        opt.set_steps(self.optimizer_steps);
        Ok(opt)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut meta = HashMap::new();
        meta.insert("format".to_string(), FORMAT.to_string());
        meta.insert("version".to_string(), VERSION.to_string());
        meta.insert("model_config".to_string(), json(&self.model_config));
        meta.insert("train_config".to_string(), json(&self.train_config));
        meta.insert("epoch".to_string(), self.epoch.to_string());
        meta.insert("best_val_combined_mae".to_string(), json(&self.best_val_combined_mae));
        meta.insert(
            "epochs_without_improvement".to_string(),
            self.epochs_without_improvement.to_string(),
        );
        meta.insert("optimizer_steps".to_string(), self.optimizer_steps.to_string());
        meta.insert("optimizer_params".to_string(), json(&self.optimizer_params));
        meta.insert("history".to_string(), json(&self.history));
        let arrays: Vec<HostArray> = self
            .params
            .iter()
            .map(|a| HostArray {
                name: format!("{PARAM_PREFIX}{}", a.name),
                ..a.clone()
            })
            .chain(self.optimizer_state.iter().cloned())
            .collect();
        tensorfile::serialize(&arrays, meta)
    }

    /// Parses and fully validates a checkpoint; nothing is returned unless
    /// every array is present with the shape the stored configuration implies.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let file = TensorFile::parse(bytes).map_err(|e| bad(format!("unreadable container: {e}")))?;
        let meta = &file.metadata;
        let get = |key: &str| meta.get(key).ok_or_else(|| bad(format!("missing metadata `{key}`")));
        if get("format")? != FORMAT {
            return Err(bad(format!("not a checkpoint (format {:?})", meta.get("format"))));
        }
        if get("version")? != VERSION {
            return Err(bad(format!("unsupported checkpoint version {}", get("version")?)));
        }
        fn parse<T: serde::de::DeserializeOwned>(key: &str, s: &str) -> Result<T> {
            serde_json::from_str(s).map_err(|e| Error::Checkpoint(format!("bad `{key}`: {e}")))
        }
        let model_config: ModelConfig = parse("model_config", get("model_config")?)?;
        let train_config: TrainConfig = parse("train_config", get("train_config")?)?;
        model_config.validate().map_err(|e| bad(e.to_string()))?;
        train_config.validate().map_err(|e| bad(e.to_string()))?;
        let optimizer_params: Vec<String> = parse("optimizer_params", get("optimizer_params")?)?;

        let specs = model_specs(&model_config);
        let mut problems = Vec::new();
        let mut expect = |name: String, shape: &[usize]| match file.shape(&name) {
            None => problems.push(format!("{name}: missing")),
            Some(s) if s != shape => problems.push(format!("{name}: expected {shape:?}, found {s:?}")),
            Some(_) => {}
        };
        for spec in &specs {
            expect(format!("{PARAM_PREFIX}{}", spec.name), &spec.shape);
        }
        for name in &optimizer_params {
            let Some(spec) = specs.iter().find(|s| &s.name == name) else {
                return Err(bad(format!("optimizer refers to unknown parameter `{name}`")));
            };
            expect(format!("{SQUARE_AVG_PREFIX}{name}"), &spec.shape);
            expect(format!("{MOMENTUM_PREFIX}{name}"), &spec.shape);
        }
        if !problems.is_empty() {
            return Err(bad(problems.join("; ")));
        }

        let read = |name: String, shape: &[usize]| -> Result<HostArray> {
            let data = file.read_f32(&name).map_err(bad)?;
            Ok(HostArray {
                name,
                shape: shape.to_vec(),
                data,
            })
        };
        let params = specs
            .iter()
            .map(|s| {
                read(format!("{PARAM_PREFIX}{}", s.name), &s.shape).map(|a| HostArray {
                    name: s.name.clone(),
                    ..a
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut optimizer_state = Vec::new();
        for name in &optimizer_params {
            let spec = specs.iter().find(|s| &s.name == name).expect("checked above");
            optimizer_state.push(read(format!("{SQUARE_AVG_PREFIX}{name}"), &spec.shape)?);
            optimizer_state.push(read(format!("{MOMENTUM_PREFIX}{name}"), &spec.shape)?);
        }
        if params.iter().chain(&optimizer_state).flat_map(|a| &a.data).any(|v| !v.is_finite()) {
            return Err(bad("non-finite values in checkpoint".to_string()));
        }

        Ok(Self {
            model_config,
            train_config,
            epoch: parse("epoch", get("epoch")?)?,
            best_val_combined_mae: parse("best_val_combined_mae", get("best_val_combined_mae")?)?,
            epochs_without_improvement: parse(
                "epochs_without_improvement",
                get("epochs_without_improvement")?,
            )?,
            optimizer_steps: parse("optimizer_steps", get("optimizer_steps")?)?,
            history: parse("history", get("history")?)?,
            params,
            optimizer_params,
            optimizer_state,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        tensorfile::write_atomic(path.as_ref(), &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("metadata serializes")
}

/// Writes atomically (temp file, then rename).
pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    checkpoint.save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::load(path)
}
