//! Patch discriminator: four stride-2 convolutions with leaky ReLU.

use candle_core::Tensor;

use crate::error::Result;
use crate::layers::Conv2d;
use crate::params::ParamStore;

pub const DISC_PREFIX: &str = "disc.";

#[derive(Debug, Clone)]
pub struct PatchDiscriminator {
    convs: Vec<Conv2d>,
}

impl PatchDiscriminator {
    pub fn new(store: &mut ParamStore, width: usize) -> Result<Self> {
        let chans = [3, width, 2 * width, 4 * width, 1];
        let convs = (0..4)
            .map(|i| Conv2d::new(store, &format!("disc.c{}", i + 1), chans[i], chans[i + 1], 3, 2, 1, true))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { convs })
    }

    /// `(B, 3, H, W)` → logits `(B, 1, H/16, W/16)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for (i, c) in self.convs.iter().enumerate() {
            h = c.forward(&h)?;
            if i + 1 < self.convs.len() {
                h = candle_nn::ops::leaky_relu(&h, 0.2)?;
            }
        }
        Ok(h)
    }
}
