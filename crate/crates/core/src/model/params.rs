use std::collections::HashMap;

use candle_core::{Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensorfile::HostArray;
use crate::{Error, Result};

/// How a parameter is filled before any weights are loaded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform in `[-bound, bound)`.
    Uniform(f64),
}

impl Init {
    pub fn fan_in(fan_in: usize) -> Self {
        Init::Uniform(1.0 / (fan_in as f64).sqrt())
    }
}

/// Name, shape and initialiser of one parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], init: Init) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub(crate) fn prefixed(mut self, prefix: &str) -> Self {
        self.name = format!("{prefix}{}", self.name);
        self
    }
}

/// Specs for a `(out, in)` weight and `(out)` bias.
pub(crate) fn linear_specs(name: &str, fan_in: usize, fan_out: usize, bias: Init) -> [ParamSpec; 2] {
    [
        ParamSpec::new(format!("{name}.weight"), &[fan_out, fan_in], Init::fan_in(fan_in)),
        ParamSpec::new(format!("{name}.bias"), &[fan_out], bias),
    ]
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Ordered collection of trainable arrays.
///
/// Each array is drawn from its own ChaCha stream keyed by the parameter
/// name, so a parameter's initial value depends only on `(seed, name, shape)`.
pub struct ParamStore {
    entries: Vec<(String, Var)>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn init(specs: &[ParamSpec], seed: u64) -> Result<Self> {
        let mut entries = Vec::with_capacity(specs.len());
        let mut index = HashMap::with_capacity(specs.len());
        for spec in specs {
            let data = init_values(spec, seed);
            let var = Var::from_tensor(&Tensor::from_vec(data, spec.shape.as_slice(), &Device::Cpu)?)?;
            if index.insert(spec.name.clone(), entries.len()).is_some() {
                return Err(Error::Config(format!("duplicate parameter `{}`", spec.name)));
            }
            entries.push((spec.name.clone(), var));
        }
        Ok(Self { entries, index })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Result<Tensor> {
        self.var(name).map(|v| v.as_tensor().clone())
    }

    pub fn var(&self, name: &str) -> Result<&Var> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i].1)
            .ok_or_else(|| Error::Config(format!("no parameter named `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v))
    }

    /// Total scalar count of parameters whose name starts with `prefix`.
    pub fn count_with_prefix(&self, prefix: &str) -> usize {
        self.iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, v)| v.elem_count())
            .sum()
    }

    /// Overwrites a parameter with host data of the same shape.
    pub fn set_host(&self, name: &str, data: Vec<f32>) -> Result<()> {
        let var = self.var(name)?;
        let shape = var.dims().to_vec();
        if data.len() != var.elem_count() {
            return Err(Error::Shape {
                expected: format!("{shape:?}"),
                actual: format!("{} values", data.len()),
            });
        }
        var.set(&Tensor::from_vec(data, shape.as_slice(), &Device::Cpu)?)?;
        Ok(())
    }

    pub fn host_values(&self, name: &str) -> Result<Vec<f32>> {
        Ok(self.var(name)?.flatten_all()?.to_vec1::<f32>()?)
    }

    pub(crate) fn to_host(&self) -> Result<Vec<HostArray>> {
        self.iter()
            .map(|(name, var)| {
                Ok(HostArray {
                    name: name.to_string(),
                    shape: var.dims().to_vec(),
                    data: var.flatten_all()?.to_vec1::<f32>()?,
                })
            })
            .collect()
    }

    /// True when every parameter is finite.
    pub fn all_finite(&self) -> Result<bool> {
        for (_, var) in self.iter() {
            if var.flatten_all()?.to_vec1::<f32>()?.iter().any(|v| !v.is_finite()) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn init_values(spec: &ParamSpec, seed: u64) -> Vec<f32> {
    let n = spec.numel();
    match spec.init {
        Init::Zeros => vec![0.0; n],
        Init::Ones => vec![1.0; n],
        Init::Uniform(bound) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(fnv1a(&spec.name));
            (0..n)
                .map(|_| ((rng.gen::<f64>() * 2.0 - 1.0) * bound) as f32)
                .collect()
        }
    }
}
