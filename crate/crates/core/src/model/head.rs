use candle_core::Tensor;

use super::config::HeadTopology;
use super::layers::Linear;
use super::params::{ParamSpec, ParamStore};
use crate::{Result, TASK_NAMES};

/// Prefix of head parameters inside a full model.
pub const HEAD_PREFIX: &str = "head.";

/// Head parameter specs (with [`HEAD_PREFIX`]) for a given feature width.
///
/// Fresh layers draw weights uniformly in ±1/sqrt(fan_in) and start with
/// zero biases.
pub fn head_specs(feature_dim: usize, topology: &HeadTopology) -> Vec<ParamSpec> {
    let mut s = Vec::new();
    let mut width = feature_dim;
    for (i, &w) in topology.shared_widths().iter().enumerate() {
        s.extend(Linear::specs(&format!("{HEAD_PREFIX}shared.{i}"), width, w));
        width = w;
    }
    for task in TASK_NAMES {
        let mut w_in = width;
        if let HeadTopology::Full { task_width, .. } = topology {
            s.extend(Linear::specs(&format!("{HEAD_PREFIX}tasks.{task}.hidden"), width, *task_width));
            w_in = *task_width;
        }
        s.extend(Linear::specs(&format!("{HEAD_PREFIX}tasks.{task}.out"), w_in, 1));
    }
    s
}

/// Scalar parameter count of a head, computed without allocating it.
pub fn head_parameter_count(feature_dim: usize, topology: &HeadTopology) -> usize {
    head_specs(feature_dim, topology).iter().map(ParamSpec::numel).sum()
}

struct TaskHead {
    hidden: Option<Linear>,
    out: Linear,
}

/// Shared ReLU layers followed by one linear scalar output per task.
pub(crate) struct Head {
    shared: Vec<Linear>,
    tasks: Vec<TaskHead>,
}

impl Head {
    pub fn load(topology: &HeadTopology, store: &ParamStore) -> Result<Self> {
        let shared = (0..topology.shared_widths().len())
            .map(|i| Linear::load(store, &format!("{HEAD_PREFIX}shared.{i}")))
            .collect::<Result<_>>()?;
        let tasks = TASK_NAMES
            .iter()
            .map(|task| {
                let hidden = match topology {
                    HeadTopology::Full { .. } => {
                        Some(Linear::load(store, &format!("{HEAD_PREFIX}tasks.{task}.hidden"))?)
                    }
                    HeadTopology::Compressed { .. } => None,
                };
                Ok(TaskHead {
                    hidden,
                    out: Linear::load(store, &format!("{HEAD_PREFIX}tasks.{task}.out"))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { shared, tasks })
    }

    /// `(B, F)` features to `(B, 5)` predictions.
    pub fn forward(&self, features: &Tensor) -> Result<Tensor> {
        let mut h = features.clone();
        for layer in &self.shared {
            h = layer.forward(&h)?.relu()?;
        }
        let columns = self
            .tasks
            .iter()
            .map(|t| {
                let x = match &t.hidden {
                    Some(hidden) => hidden.forward(&h)?.relu()?,
                    None => h.clone(),
                };
                t.out.forward(&x)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Tensor::cat(&columns, 1)?)
    }
}
