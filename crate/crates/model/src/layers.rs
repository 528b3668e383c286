//! Minimal convolution and linear layers over [`ParamStore`] parameters.

use candle_core::{Module, Tensor};

use crate::error::Result;
use crate::params::{Init, ParamStore};

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        groups: usize,
        bias: bool,
    ) -> Result<Self> {
        let fan_in = c_in / groups * k * k;
        let weight = store.weight(&format!("{name}.weight"), (c_out, c_in / groups, k, k), fan_in)?;
        let bias = if bias { Some(store.param(&format!("{name}.bias"), c_out, Init::Zeros)?) } else { None };
        Ok(Self { weight, bias, stride, padding: k / 2, groups })
    }

    pub fn from_parts(weight: Tensor, bias: Option<Tensor>, stride: usize, padding: usize, groups: usize) -> Self {
        Self { weight, bias, stride, padding, groups }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, self.groups)?;
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(&b.reshape((1, b.dim(0)?, 1, 1))?)?,
            None => y,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize) -> Result<Self> {
        let weight = store.weight(&format!("{name}.weight"), (d_out, d_in), d_in)?;
        let bias = store.param(&format!("{name}.bias"), d_out, Init::Zeros)?;
        Ok(Self { weight, bias })
    }

    pub fn with_init(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, init: Init) -> Result<Self> {
        let weight = store.param(&format!("{name}.weight"), (d_out, d_in), init)?;
        let bias = store.param(&format!("{name}.bias"), d_out, Init::Zeros)?;
        Ok(Self { weight, bias })
    }

    /// `(B, d_in)` → `(B, d_out)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(candle_nn::Linear::new(self.weight.clone(), Some(self.bias.clone())).forward(x)?)
    }
}
