//! Training objective: Charbonnier reconstruction, a Sobel-gradient
//! stand-in for the learned perceptual term, and hinge GAN losses.

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

pub const CHARBONNIER_EPS: f64 = 1e-3;
pub const PERCEPTUAL_SCALES: usize = 3;
/// Label used wherever the perceptual term is reported.
pub const PERCEPTUAL_LABEL: &str = "perceptual_proxy(sobel-gradient L1, 3 scales; not LPIPS)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub rec: f64,
    pub perc: f64,
    pub gan: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { rec: 2.0, perc: 5.0, gan: 0.5 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.rec, self.perc, self.gan].iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(validation(format!("loss weights must be finite and ≥ 0, got {self:?}")));
        }
        Ok(())
    }

    pub fn combine(&self, rec: f64, perc: f64, gan: f64) -> f64 {
        self.rec * rec + self.perc * perc + self.gan * gan
    }
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(validation(format!("shape mismatch: {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// `mean(√((pred − gt)² + ε²))`.
pub fn charbonnier_loss(pred: &Tensor, gt: &Tensor, eps: f64) -> Result<Tensor> {
    same_shape(pred, gt)?;
    Ok((pred - gt)?.sqr()?.affine(1.0, eps * eps)?.sqrt()?.mean_all()?)
}

/// Per-channel Sobel gradient magnitude of `(B, C, H, W)` (valid region).
pub fn sobel_magnitude(x: &Tensor) -> Result<Tensor> {
    let (_, c, h, w) = x.dims4()?;
    if h < 3 || w < 3 {
        return Err(validation(format!("Sobel needs at least 3×3 inputs, got {h}×{w}")));
    }
    let gx = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];
    let gy = [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0];
    let kern = |k: [f64; 9]| -> Result<Tensor> {
        let v: Vec<f64> = (0..c).flat_map(|_| k.iter().map(|x| x / 8.0)).collect();
        Ok(Tensor::from_vec(v, (c, 1, 3, 3), &Device::Cpu)?.to_dtype(x.dtype())?)
    };
    let dx = x.conv2d(&kern(gx)?, 0, 1, 1, c)?;
    let dy = x.conv2d(&kern(gy)?, 0, 1, 1, c)?;
    Ok((dx.sqr()? + dy.sqr()?)?.affine(1.0, 1e-8)?.sqrt()?)
}

/// Mean over dyadic scales of `mean|‖∇pred‖ − ‖∇gt‖|`; coarser scales come
/// from 2×2 average pooling.
pub fn perceptual_proxy_loss(pred: &Tensor, gt: &Tensor) -> Result<Tensor> {
    same_shape(pred, gt)?;
    let (mut p, mut g) = (pred.clone(), gt.clone());
    let mut terms = Vec::with_capacity(PERCEPTUAL_SCALES);
    for s in 0..PERCEPTUAL_SCALES {
        if s > 0 {
            p = p.avg_pool2d(2)?;
            g = g.avg_pool2d(2)?;
        }
        terms.push((sobel_magnitude(&p)? - sobel_magnitude(&g)?)?.abs()?.mean_all()?);
    }
    Ok((Tensor::stack(&terms, 0)?.sum_all()? / PERCEPTUAL_SCALES as f64)?)
}

/// Hinge losses from discriminator logits: `(g_loss, d_loss)`.
pub fn gan_losses(d_real: &Tensor, d_fake: &Tensor) -> Result<(Tensor, Tensor)> {
    let d_loss = ((1.0 - d_real)?.relu()?.mean_all()? + (d_fake + 1.0)?.relu()?.mean_all()?)?;
    let g_loss = d_fake.mean_all()?.neg()?;
    Ok((g_loss, d_loss))
}

/// Generator objective; the discriminator's logits on `pred` are given.
#[derive(Debug, Clone)]
pub struct LossTerms {
    pub total: Tensor,
    pub rec: f64,
    pub perc: f64,
    pub gan: f64,
}

pub fn total_loss(pred: &Tensor, gt: &Tensor, d_fake: &Tensor, weights: &LossWeights) -> Result<LossTerms> {
    weights.validate()?;
    let rec = charbonnier_loss(pred, gt, CHARBONNIER_EPS)?;
    let perc = perceptual_proxy_loss(pred, gt)?;
    let gan = d_fake.mean_all()?.neg()?;
    let total = ((rec.affine(weights.rec, 0.0)? + perc.affine(weights.perc, 0.0)?)? + gan.affine(weights.gan, 0.0)?)?;
    let f = |t: &Tensor| crate::tensor::scalar(t);
    Ok(LossTerms { rec: f(&rec)?, perc: f(&perc)?, gan: f(&gan)?, total })
}
