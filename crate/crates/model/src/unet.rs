//! Seven-block UNet (three down, bottleneck, three up with skips) whose
//! convolutions carry degradation-conditioned LoRA.

use candle_core::{Device, Tensor};

use crate::error::{validation, Result};
use crate::layers::Linear;
use crate::lora::LoraConv;
use crate::params::ParamStore;

/// Timestep used for the single denoising step.
pub const FIXED_TIMESTEP: f64 = 999.0;
pub const TIME_EMBED_DIM: usize = 32;
pub const NUM_BLOCKS: usize = 7;

/// Sinusoidal embedding `[sin(t·ω_k), cos(t·ω_k)]`, `ω_k = 10000^(−k/half)`.
pub fn timestep_embedding(t: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    let freqs: Vec<f64> = (0..half).map(|k| (-(k as f64) / half as f64 * 10000f64.ln()).exp()).collect();
    out.extend(freqs.iter().map(|w| (t * w).sin()));
    out.extend(freqs.iter().map(|w| (t * w).cos()));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Down,
    Mid,
    Up,
}

#[derive(Debug, Clone)]
pub struct UNetBlock {
    pub kind: BlockKind,
    pub c_in: usize,
    pub c_out: usize,
    conv1: LoraConv,
    conv2: LoraConv,
    temb: Linear,
}

impl UNetBlock {
    fn new(store: &mut ParamStore, name: &str, kind: BlockKind, c_in: usize, c_out: usize, rank: usize) -> Result<Self> {
        let stride = if kind == BlockKind::Down { 2 } else { 1 };
        Ok(Self {
            kind,
            c_in,
            c_out,
            conv1: LoraConv::new(store, &format!("{name}.conv1"), c_in, c_out, 3, stride, rank)?,
            conv2: LoraConv::new(store, &format!("{name}.conv2"), c_out, c_out, 3, 1, rank)?,
            temb: Linear::new(store, &format!("{name}.temb"), TIME_EMBED_DIM, c_out)?,
        })
    }

    pub fn lora_layers(&self) -> [&LoraConv; 2] {
        [&self.conv1, &self.conv2]
    }

    /// `emb` is the LoRA embedding; `t` the fixed `(1, E_t)` time embedding.
    fn forward(&self, x: &Tensor, emb: &Tensor, t: &Tensor, last: bool) -> Result<Tensor> {
        let x = if self.kind == BlockKind::Up { x.upsample_nearest2d(x.dim(2)? * 2, x.dim(3)? * 2)? } else { x.clone() };
        let tb = self.temb.forward(t)?.reshape((1, self.c_out, 1, 1))?;
        let h = self.conv1.forward(&x, emb)?.broadcast_add(&tb)?.silu()?;
        let h = self.conv2.forward(&h, emb)?;
        Ok(if last { h } else { h.silu()? })
    }
}

#[derive(Debug, Clone)]
pub struct ToyUNet {
    pub latent_channels: usize,
    pub widths: [usize; 3],
    pub blocks: Vec<UNetBlock>,
    time: Tensor,
}

impl ToyUNet {
    pub fn new(store: &mut ParamStore, latent_channels: usize, base_width: usize, rank: usize) -> Result<Self> {
        let w = [base_width, 2 * base_width, 4 * base_width];
        let layout = [
            (BlockKind::Down, latent_channels, w[0]),
            (BlockKind::Down, w[0], w[1]),
            (BlockKind::Down, w[1], w[2]),
            (BlockKind::Mid, w[2], w[2]),
            (BlockKind::Up, 2 * w[2], w[1]),
            (BlockKind::Up, 2 * w[1], w[0]),
            (BlockKind::Up, 2 * w[0], latent_channels),
        ];
        let blocks = layout
            .iter()
            .enumerate()
            .map(|(i, &(k, ci, co))| UNetBlock::new(store, &format!("unet.b{}", i + 1), k, ci, co, rank))
            .collect::<Result<Vec<_>>>()?;
        let time = Tensor::from_vec(timestep_embedding(FIXED_TIMESTEP, TIME_EMBED_DIM), (1, TIME_EMBED_DIM), &Device::Cpu)?
            .to_dtype(store.dtype())?;
        Ok(Self { latent_channels, widths: w, blocks, time })
    }

    /// `(channels, side)` of every block's output for a latent of side `s`.
    pub fn block_shapes(&self, s: usize) -> Vec<(usize, usize)> {
        let [a, b, c] = self.widths;
        vec![(a, s / 2), (b, s / 4), (c, s / 8), (c, s / 8), (b, s / 4), (a, s / 2), (self.latent_channels, s)]
    }

    pub fn check_latent(&self, z: &Tensor) -> Result<()> {
        let (_, c, h, w) = z.dims4()?;
        if c != self.latent_channels || h != w || h % 8 != 0 || h == 0 {
            return Err(validation(format!(
                "UNet expects (B, {}, s, s) with s a multiple of 8, got {:?}",
                self.latent_channels,
                z.dims()
            )));
        }
        Ok(())
    }

    /// One traversal; `hook(b, f)` post-processes block `b`'s output before
    /// it feeds the next block and the skip connections. The final output
    /// adds the input latent.
    pub fn forward_with<F>(&self, z: &Tensor, emb: &Tensor, mut hook: F) -> Result<Tensor>
    where
        F: FnMut(usize, Tensor) -> Result<Tensor>,
    {
        self.check_latent(z)?;
        let mut outs: Vec<Tensor> = Vec::with_capacity(NUM_BLOCKS);
        let mut prev = z.clone();
        for (b, block) in self.blocks.iter().enumerate() {
            let input = match b {
                4 => Tensor::cat(&[&prev, &outs[2]], 1)?,
                5 => Tensor::cat(&[&prev, &outs[1]], 1)?,
                6 => Tensor::cat(&[&prev, &outs[0]], 1)?,
                _ => prev.clone(),
            };
            let f = block.forward(&input, emb, &self.time, b + 1 == NUM_BLOCKS)?;
            let f = if b + 1 == NUM_BLOCKS { (f + z)? } else { f };
            let f = hook(b, f)?;
            outs.push(f.clone());
            prev = f;
        }
        Ok(prev)
    }

    pub fn forward(&self, z: &Tensor, emb: &Tensor) -> Result<Tensor> {
        self.forward_with(z, emb, |_, f| Ok(f))
    }
}
