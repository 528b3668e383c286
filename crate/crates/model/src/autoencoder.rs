//! Toy latent autoencoder: a two-stage strided encoder to `C_z × N/4 × N/4`
//! carrying LoRA adapters, and a pixel-shuffle decoder.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::layers::Conv2d;
use crate::lora::LoraConv;
use crate::params::ParamStore;
use crate::tensor::pixel_shuffle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AeMode {
    Learned,
    /// Latent = pixels; encoder and decoder are bypassed.
    Identity,
}

#[derive(Debug, Clone)]
pub struct ToyAutoencoder {
    pub mode: AeMode,
    pub latent_channels: usize,
    enc: Vec<LoraConv>,
    dec1: Conv2d,
    dec2: Conv2d,
    dec3: Conv2d,
}

pub const AE_DOWNSCALE: usize = 4;

impl ToyAutoencoder {
    pub fn new(store: &mut ParamStore, mode: AeMode, latent_channels: usize, rank: usize) -> Result<Self> {
        let enc = vec![
            LoraConv::new(store, "ae.enc.c1", 3, 32, 3, 2, rank)?,
            LoraConv::new(store, "ae.enc.c2", 32, 64, 3, 2, rank)?,
            LoraConv::new(store, "ae.enc.c3", 64, latent_channels, 3, 1, rank)?,
        ];
        let dec1 = Conv2d::new(store, "ae.dec.c1", latent_channels, 64, 3, 1, 1, true)?;
        let dec2 = Conv2d::new(store, "ae.dec.c2", 64, 32 * 4, 3, 1, 1, true)?;
        let dec3 = Conv2d::new(store, "ae.dec.c3", 32, 3 * 4, 3, 1, 1, true)?;
        let latent_channels = if mode == AeMode::Identity { 3 } else { latent_channels };
        Ok(Self { mode, latent_channels, enc, dec1, dec2, dec3 })
    }

    pub fn lora_layers(&self) -> Vec<&LoraConv> {
        self.enc.iter().collect()
    }

    /// Latent side for an `n × n` view.
    pub fn latent_size(&self, n: usize) -> usize {
        match self.mode {
            AeMode::Learned => n / AE_DOWNSCALE,
            AeMode::Identity => n,
        }
    }

    /// `(B, 3, N, N)` → `(B, C_z, N/4, N/4)`; `emb` is the LoRA embedding of
    /// `d`, or `None` to run the base encoder alone.
    pub fn encode(&self, x: &Tensor, emb: Option<&Tensor>) -> Result<Tensor> {
        let (_, c, h, w) = x.dims4()?;
        if c != 3 || h % AE_DOWNSCALE != 0 || w % AE_DOWNSCALE != 0 {
            return Err(validation(format!("encoder expects (B, 3, 4k, 4k), got {:?}", x.dims())));
        }
        if self.mode == AeMode::Identity {
            return Ok(x.clone());
        }
        let mut h = x.clone();
        for (i, layer) in self.enc.iter().enumerate() {
            h = match emb {
                Some(e) => layer.forward(&h, e)?,
                None => layer.forward_base(&h)?,
            };
            if i + 1 < self.enc.len() {
                h = h.silu()?;
            }
        }
        Ok(h)
    }

    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        let (_, c, _, _) = z.dims4()?;
        if c != self.latent_channels {
            return Err(validation(format!("decoder expects {} latent channels, got {c}", self.latent_channels)));
        }
        if self.mode == AeMode::Identity {
            return Ok(z.clone());
        }
        let h = self.dec1.forward(z)?.silu()?;
        let h = pixel_shuffle(&self.dec2.forward(&h)?, 2)?.silu()?;
        pixel_shuffle(&self.dec3.forward(&h)?, 2)
    }
}
