//! Degradation-conditioned low-rank adapters on convolutions.
//!
//! An adapted conv computes `W∗x + U·M(d)·(D∗x)` where `D` is a rank-`r`
//! down-projection with the base conv's geometry, `U` a zero-initialized
//! 1×1 up-projection and `M(d) = I + Δ(d)` an `r×r` mixing matrix generated
//! from a shared embedding of `d`.

use candle_core::{Device, Tensor};

use crate::error::{validation, Result};
use crate::layers::{Conv2d, Linear};
use crate::params::{Init, ParamStore};

pub const LORA_RANK: usize = 4;
pub const LORA_EMBED_DIM: usize = 32;

/// Shared embedding `d ↦ silu(W·d + b)`.
#[derive(Debug, Clone)]
pub struct LoraEmbedding {
    pub proj: Linear,
}

impl LoraEmbedding {
    pub fn new(store: &mut ParamStore, name: &str) -> Result<Self> {
        Ok(Self { proj: Linear::new(store, &format!("{name}.proj"), 2, LORA_EMBED_DIM)? })
    }

    /// `(B, 2)` → `(B, E)`. Rejects `d` outside `[0, 1]²`.
    pub fn forward(&self, d: &Tensor) -> Result<Tensor> {
        let v = d.flatten_all()?.to_dtype(candle_core::DType::F64)?.to_vec1::<f64>()?;
        if let Some(x) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(validation(format!("degradation level {x} outside [0, 1]")));
        }
        Ok(self.proj.forward(d)?.silu()?)
    }
}

#[derive(Debug, Clone)]
pub struct LoraConv {
    pub base: Conv2d,
    pub down: Conv2d,
    pub up: Tensor,
    pub modulation: Linear,
    pub rank: usize,
}

impl LoraConv {
    /// Base weights live under `name`, adapter weights under `lora.<name>`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        rank: usize,
    ) -> Result<Self> {
        let base = Conv2d::new(store, name, c_in, c_out, k, stride, 1, true)?;
        let ln = format!("lora.{name}");
        let down_w = store.weight(&format!("{ln}.down"), (rank, c_in, k, k), c_in * k * k)?;
        let down = Conv2d::from_parts(down_w, None, stride, k / 2, 1);
        let up = store.param(&format!("{ln}.up"), (c_out, rank, 1, 1), Init::Zeros)?;
        let modulation = Linear::with_init(store, &format!("{ln}.mod"), LORA_EMBED_DIM, rank * rank, Init::Uniform(0.01))?;
        Ok(Self { base, down, up, modulation, rank })
    }

    /// `M(d) = I + Δ(emb)`, shape `(B, r, r)`.
    pub fn scales(&self, emb: &Tensor) -> Result<Tensor> {
        let b = emb.dim(0)?;
        let delta = self.modulation.forward(emb)?.reshape((b, self.rank, self.rank))?;
        let eye = Tensor::eye(self.rank, emb.dtype(), &Device::Cpu)?.unsqueeze(0)?;
        Ok(delta.broadcast_add(&eye)?)
    }

    pub fn forward(&self, x: &Tensor, emb: &Tensor) -> Result<Tensor> {
        let y = self.base.forward(x)?;
        let h = self.down.forward(x)?;
        let (b, r, hh, ww) = h.dims4()?;
        let m = self.scales(emb)?;
        let h = m.matmul(&h.reshape((b, r, hh * ww))?)?.reshape((b, r, hh, ww))?;
        Ok((y + h.conv2d(&self.up, 0, 1, 1, 1)?)?)
    }

    pub fn forward_base(&self, x: &Tensor) -> Result<Tensor> {
        self.base.forward(x)
    }
}
