//! Differentiable building blocks on candle tensors.

use candle_core::{Tensor, D};

use super::params::{linear_specs, Init, ParamSpec, ParamStore};
use crate::Result;

const LAYER_NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub(crate) struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    pub fn load(store: &ParamStore, name: &str) -> Result<Self> {
        Ok(Self {
            weight: store.get(&format!("{name}.weight"))?,
            bias: store.get(&format!("{name}.bias"))?,
        })
    }

    pub fn specs(name: &str, fan_in: usize, fan_out: usize) -> [ParamSpec; 2] {
        linear_specs(name, fan_in, fan_out, Init::Zeros)
    }

    /// Works on `(N, in)` and `(B, T, in)` inputs.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let wt = self.weight.t()?;
        let y = match x.rank() {
            2 => x.matmul(&wt)?,
            _ => x.broadcast_matmul(&wt)?,
        };
        Ok(y.broadcast_add(&self.bias)?)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
}

impl LayerNorm {
    pub fn load(store: &ParamStore, name: &str) -> Result<Self> {
        Ok(Self {
            weight: store.get(&format!("{name}.weight"))?,
            bias: store.get(&format!("{name}.bias"))?,
        })
    }

    pub fn specs(name: &str, dim: usize) -> [ParamSpec; 2] {
        [
            ParamSpec::new(format!("{name}.weight"), &[dim], Init::Ones),
            ParamSpec::new(format!("{name}.bias"), &[dim], Init::Zeros),
        ]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + LAYER_NORM_EPS)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.weight)?.broadcast_add(&self.bias)?)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Conv2d {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    pub fn load(store: &ParamStore, name: &str, stride: usize, padding: usize) -> Result<Self> {
        Ok(Self {
            weight: store.get(&format!("{name}.weight"))?,
            bias: store.get(&format!("{name}.bias"))?,
            stride,
            padding,
        })
    }

    pub fn specs(name: &str, c_in: usize, c_out: usize, kernel: usize, bias: Init) -> [ParamSpec; 2] {
        let fan_in = c_in * kernel * kernel;
        [
            ParamSpec::new(format!("{name}.weight"), &[c_out, c_in, kernel, kernel], Init::fan_in(fan_in)),
            ParamSpec::new(format!("{name}.bias"), &[c_out], bias),
        ]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        let c = self.bias.dim(0)?;
        Ok(y.broadcast_add(&self.bias.reshape((1, c, 1, 1))?)?)
    }
}

/// Numerically stable softmax over the last dimension.
pub(crate) fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}
