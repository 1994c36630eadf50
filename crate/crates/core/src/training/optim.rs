//! RMSProp with classical momentum.
//!
//! Per parameter element, with gradient `g`:
//!
//! ```text
//! g   ← g + weight_decay · θ
//! ms  ← ρ · ms + (1 − ρ) · g²
//! mom ← μ · mom + lr · g / sqrt(ms + ε)
//! θ   ← θ − mom
//! ```
//!
//! `ε` sits inside the square root. `ms` and `mom` start at zero.

use candle_core::backprop::GradStore;

use super::TrainConfig;
use crate::model::ParamStore;
use crate::tensorfile::HostArray;
use crate::{Error, Result};

/// Hyperparameters of one optimizer instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub rms_discount: f64,
    pub epsilon: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl RmsPropConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.rms_discount)
            && self.epsilon > 0.0
            && self.epsilon.is_finite()
            && self.momentum >= 0.0
            && self.momentum.is_finite()
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer hyperparameters {self:?}")))
        }
    }
}

impl From<&TrainConfig> for RmsPropConfig {
    fn from(c: &TrainConfig) -> Self {
        Self {
            learning_rate: c.learning_rate,
            rms_discount: c.rms_discount,
            epsilon: c.epsilon,
            momentum: c.momentum,
            weight_decay: c.weight_decay,
        }
    }
}

struct Slot {
    name: String,
    square_avg: Vec<f32>,
    momentum: Vec<f32>,
}

pub struct RmsProp {
    config: RmsPropConfig,
    slots: Vec<Slot>,
    steps: u64,
}

/// Creates an optimizer over the named parameters of `params`.
pub fn make_optimizer<'a>(
    config: RmsPropConfig,
    params: &ParamStore,
    names: impl IntoIterator<Item = &'a str>,
) -> Result<RmsProp> {
    config.validate()?;
    let slots = names
        .into_iter()
        .map(|name| {
            let n = params.var(name)?.elem_count();
            Ok(Slot {
                name: name.to_string(),
                square_avg: vec![0.0; n],
                momentum: vec![0.0; n],
            })
        })
        .collect::<Result<_>>()?;
    Ok(RmsProp {
        config,
        slots,
        steps: 0,
    })
}

impl RmsProp {
    pub fn config(&self) -> &RmsPropConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|s| s.name.as_str())
    }

    /// Applies one update using gradients from a backward pass. Parameters
    /// without a gradient are treated as having a zero gradient.
    pub fn step(&mut self, params: &ParamStore, grads: &GradStore) -> Result<()> {
        for i in 0..self.slots.len() {
            let var = params.var(&self.slots[i].name)?;
            let grad = match grads.get(var.as_tensor()) {
                Some(g) => g.flatten_all()?.to_vec1::<f32>()?,
                None => vec![0.0; var.elem_count()],
            };
            self.apply(params, i, &grad)?;
        }
        self.steps += 1;
        Ok(())
    }

    /// Applies one update from host gradients given in slot order.
    pub fn step_host(&mut self, params: &ParamStore, grads: &[Vec<f32>]) -> Result<()> {
        if grads.len() != self.slots.len() {
            return Err(Error::Argument(format!(
                "expected {} gradients, got {}",
                self.slots.len(),
                grads.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            self.apply(params, i, g)?;
        }
        self.steps += 1;
        Ok(())
    }

    fn apply(&mut self, params: &ParamStore, slot: usize, grad: &[f32]) -> Result<()> {
        let c = self.config;
        let (lr, rho, eps, mu, wd) = (
            c.learning_rate as f32,
            c.rms_discount as f32,
            c.epsilon as f32,
            c.momentum as f32,
            c.weight_decay as f32,
        );
        let s = &mut self.slots[slot];
        let mut theta = params.host_values(&s.name)?;
        if grad.len() != theta.len() {
            return Err(Error::Shape {
                expected: format!("{} gradient values for `{}`", theta.len(), s.name),
                actual: grad.len().to_string(),
            });
        }
        for j in 0..theta.len() {
            let g = grad[j] + wd * theta[j];
            s.square_avg[j] = rho * s.square_avg[j] + (1.0 - rho) * g * g;
            s.momentum[j] = mu * s.momentum[j] + lr * g / (s.square_avg[j] + eps).sqrt();
            theta[j] -= s.momentum[j];
        }
        params.set_host(&s.name, theta)
    }

    pub(crate) fn state_arrays(&self, params: &ParamStore) -> Result<Vec<HostArray>> {
        let mut out = Vec::with_capacity(2 * self.slots.len());
        for s in &self.slots {
            let shape = params.var(&s.name)?.dims().to_vec();
            out.push(HostArray {
                name: format!("{}{}", SQUARE_AVG_PREFIX, s.name),
                shape: shape.clone(),
                data: s.square_avg.clone(),
            });
            out.push(HostArray {
                name: format!("{}{}", MOMENTUM_PREFIX, s.name),
                shape,
                data: s.momentum.clone(),
            });
        }
        Ok(out)
    }

    pub(crate) fn restore_slot(&mut self, name: &str, square_avg: Vec<f32>, momentum: Vec<f32>) -> Result<()> {
        let slot = self
            .slots
            .iter_mut()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("optimizer has no slot `{name}`")))?;
        if slot.square_avg.len() != square_avg.len() || slot.momentum.len() != momentum.len() {
            return Err(Error::Checkpoint(format!("optimizer state size mismatch for `{name}`")));
        }
        slot.square_avg = square_avg;
        slot.momentum = momentum;
        Ok(())
    }

    pub(crate) fn set_steps(&mut self, steps: u64) {
        self.steps = steps;
    }
}

pub(crate) const SQUARE_AVG_PREFIX: &str = "optim.square_avg/";
pub(crate) const MOMENTUM_PREFIX: &str = "optim.momentum/";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Init, ParamSpec};

    fn scalar_store(w: f32) -> ParamStore {
        let s = ParamStore::init(&[ParamSpec::new("w", &[1], Init::Zeros)], 0).unwrap();
        s.set_host("w", vec![w]).unwrap();
        s
    }

    fn default_config() -> RmsPropConfig {
        RmsPropConfig::from(&TrainConfig::default())
    }

    /// Straight-line f64 evaluation of the recurrence for a scalar.
    fn oracle(c: &RmsPropConfig, mut w: f64, grads: &[f64]) -> f64 {
        let (mut ms, mut mom) = (0.0f64, 0.0f64);
        for &g0 in grads {
            let g = g0 + c.weight_decay * w;
            ms = c.rms_discount * ms + (1.0 - c.rms_discount) * g * g;
            mom = c.momentum * mom + c.learning_rate * g / (ms + c.epsilon).sqrt();
            w -= mom;
        }
        w
    }

    #[test]
    fn single_step_matches_hand_computation() {
        let c = default_config();
        // ms = 0.1, mom = 1e-4 / sqrt(1.1), w = -mom
        let expected = -1e-4 / 1.1f64.sqrt();
        assert!((oracle(&c, 0.0, &[1.0]) - expected).abs() < 1e-18);
        let store = scalar_store(0.0);
        let mut opt = make_optimizer(c, &store, ["w"]).unwrap();
        opt.step_host(&store, &[vec![1.0]]).unwrap();
        let got = store.host_values("w").unwrap()[0] as f64;
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
    }

    #[test]
    fn multi_step_tracks_oracle() {
        let c = RmsPropConfig {
            weight_decay: 0.01,
            ..default_config()
        };
        let grads = [0.5, -2.0, 3.0, 0.0, 1.25, -0.75];
        let store = scalar_store(0.3);
        let mut opt = make_optimizer(c, &store, ["w"]).unwrap();
        for g in grads {
            opt.step_host(&store, &[vec![g as f32]]).unwrap();
        }
        let got = store.host_values("w").unwrap()[0] as f64;
        let want = oracle(&c, 0.3, &grads);
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let store = scalar_store(1.5);
        let mut opt = make_optimizer(default_config(), &store, ["w"]).unwrap();
        for _ in 0..10 {
            opt.step_host(&store, &[vec![0.0]]).unwrap();
        }
        assert_eq!(store.host_values("w").unwrap(), vec![1.5]);
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let store = scalar_store(0.0);
            let mut opt = make_optimizer(default_config(), &store, ["w"]).unwrap();
            (0..20)
                .map(|i| {
                    opt.step_host(&store, &[vec![(i as f32 * 0.37).sin()]]).unwrap();
                    store.host_values("w").unwrap()[0]
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn invalid_hyperparameters() {
        let store = scalar_store(0.0);
        for bad in [
            RmsPropConfig { learning_rate: 0.0, ..default_config() },
            RmsPropConfig { rms_discount: 1.0, ..default_config() },
            RmsPropConfig { epsilon: 0.0, ..default_config() },
            RmsPropConfig { momentum: -0.1, ..default_config() },
        ] {
            assert!(matches!(make_optimizer(bad, &store, ["w"]), Err(Error::Config(_))));
        }
    }
}
