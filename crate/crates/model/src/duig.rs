//! Deep-unfolding injection guidance: the domain alignment module (DAM)
//! converting between block features and LR pixel space, and the latent
//! unfolding step built from degradation-aware dynamic convolutions.

use std::str::FromStr;

use candle_core::{DType, Device, Tensor};
use omnisr::degrade::DegradationParams;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::layers::Linear;
use crate::params::{Init, ParamStore};
use crate::tensor::{channel_shuffle, gcd, pixel_shuffle, pixel_unshuffle};

/// `(B, 2)` tensor of `[d_n, d_b]` rows; rejects values outside `[0, 1]`.
pub fn d_tensor(ds: &[DegradationParams], dtype: DType) -> Result<Tensor> {
    let mut v = Vec::with_capacity(2 * ds.len());
    for d in ds {
        d.validate()?;
        v.extend([d.d_n, d.d_b]);
    }
    Ok(Tensor::from_vec(v, (ds.len(), 2), &Device::Cpu)?.to_dtype(dtype)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    /// No guidance injection.
    TpBaseline,
    /// Aligned LR features are added to the block features.
    LatentAdd,
    /// The unfolding step runs on L2P images with 3-channel banks.
    PixelUnfold,
    Full,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [Self::TpBaseline, Self::LatentAdd, Self::PixelUnfold, Self::Full];

    pub fn name(self) -> &'static str {
        match self {
            Self::TpBaseline => "tp_baseline",
            Self::LatentAdd => "latent_add",
            Self::PixelUnfold => "pixel_unfold",
            Self::Full => "full",
        }
    }

    pub fn uses_duig(self) -> bool {
        self != Self::TpBaseline
    }
}

impl std::fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| validation(format!("unknown variant '{s}' (expected tp_baseline|latent_add|pixel_unfold|full)")))
    }
}

/// Weight initialization for a DAM block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DamInit {
    /// `P2L ∘ L2P = I` plus uniform noise of the given amplitude.
    Calibrated(f64),
    Random,
    Zero,
}

/// Per-block latent↔pixel converter. L2P: 1×1 conv `C → 3r²`, channel
/// shuffle, pixel shuffle by `r` to `3 × N × N`. P2L: pixel unshuffle,
/// channel shuffle, 1×1 group conv `3r² → C`.
#[derive(Debug, Clone)]
pub struct DamBlock {
    pub channels: usize,
    pub feat_size: usize,
    pub view_size: usize,
    pub ratio: usize,
    pub groups: usize,
    pub l2p_weight: Tensor,
    pub l2p_bias: Tensor,
    pub p2l_weight: Tensor,
    pub p2l_bias: Tensor,
}

impl DamBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        feat_size: usize,
        view_size: usize,
        init: DamInit,
    ) -> Result<Self> {
        if feat_size == 0 || view_size % feat_size != 0 {
            return Err(validation(format!("view size {view_size} is not a multiple of feature size {feat_size}")));
        }
        let ratio = view_size / feat_size;
        let pix = 3 * ratio * ratio;
        let groups = gcd(gcd(channels, 8), pix);
        let (per_out, per_in) = (channels / groups, pix / groups);
        let (l2p_init, p2l_init) = match init {
            DamInit::Random => (
                Init::Uniform((1.0 / channels as f64).sqrt()),
                Init::Uniform((1.0 / per_in as f64).sqrt()),
            ),
            DamInit::Zero => (Init::Zeros, Init::Zeros),
            DamInit::Calibrated(noise) if per_out <= per_in => {
                let mut l = vec![0.0; pix * channels];
                let mut p = vec![0.0; channels * per_in];
                for c in 0..channels {
                    let (j, k) = (c / per_out, c % per_out);
                    l[(j * per_in + k) * channels + c] = 1.0;
                    p[c * per_in + k] = 1.0;
                }
                let (nl, np) = (store.uniform_values(l.len(), noise), store.uniform_values(p.len(), noise));
                let add = |a: Vec<f64>, b: Vec<f64>| a.into_iter().zip(b).map(|(x, y)| x + y).collect();
                (Init::Values(add(l, nl)), Init::Values(add(p, np)))
            }
            DamInit::Calibrated(_) => {
                return Err(validation(format!("cannot calibrate DAM: {channels} channels exceed 3r² = {pix}")));
            }
        };
        Ok(Self {
            channels,
            feat_size,
            view_size,
            ratio,
            groups,
            l2p_weight: store.param(&format!("{name}.l2p.weight"), (pix, channels, 1, 1), l2p_init)?,
            l2p_bias: store.param(&format!("{name}.l2p.bias"), pix, Init::Zeros)?,
            p2l_weight: store.param(&format!("{name}.p2l.weight"), (channels, per_in, 1, 1), p2l_init)?,
            p2l_bias: store.param(&format!("{name}.p2l.bias"), channels, Init::Zeros)?,
        })
    }

    fn check(&self, t: &Tensor, c: usize, s: usize, what: &str) -> Result<()> {
        let (_, tc, th, tw) = t.dims4()?;
        if (tc, th, tw) != (c, s, s) {
            return Err(validation(format!("{what}: expected (·, {c}, {s}, {s}), got {:?}", t.dims())));
        }
        Ok(())
    }

    /// Block features `(B, C, h, h)` → pixel image `(B, 3, N, N)`.
    pub fn l2p(&self, f: &Tensor) -> Result<Tensor> {
        self.check(f, self.channels, self.feat_size, "L2P input")?;
        let pix = 3 * self.ratio * self.ratio;
        let y = f.conv2d(&self.l2p_weight, 0, 1, 1, 1)?.broadcast_add(&self.l2p_bias.reshape((1, pix, 1, 1))?)?;
        pixel_shuffle(&channel_shuffle(&y, self.groups)?, self.ratio)
    }

    /// Pixel image `(B, 3, N, N)` → block features `(B, C, h, h)`.
    pub fn p2l(&self, img: &Tensor) -> Result<Tensor> {
        self.check(img, 3, self.view_size, "P2L input")?;
        let pix = 3 * self.ratio * self.ratio;
        let y = channel_shuffle(&pixel_unshuffle(img, self.ratio)?, pix / self.groups)?;
        Ok(y.conv2d(&self.p2l_weight, 0, 1, 1, self.groups)?
            .broadcast_add(&self.p2l_bias.reshape((1, self.channels, 1, 1))?)?)
    }
}

pub const MIX_HIDDEN: usize = 32;
pub const DEFAULT_KERNELS: usize = 4;

/// `K` candidate 3×3 kernels and biases mixed by `softmax(MLP(d))`.
#[derive(Debug, Clone)]
pub struct DynamicKernelBank {
    pub c_in: usize,
    pub c_out: usize,
    pub kernels: Tensor,
    pub biases: Tensor,
    pub mlp1: Linear,
    pub mlp2: Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BankInit {
    /// Every kernel is the identity plus uniform noise of this amplitude,
    /// scaled by `gain`.
    Identity { gain: f64, noise: f64 },
    Random,
}

impl DynamicKernelBank {
    pub fn new(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize, k: usize, init: BankInit) -> Result<Self> {
        if k == 0 {
            return Err(validation("kernel bank needs at least one kernel"));
        }
        let n = k * c_out * c_in * 9;
        let kinit = match init {
            BankInit::Random => Init::Uniform((1.0 / (c_in * 9) as f64).sqrt()),
            BankInit::Identity { gain, noise } => {
                if c_in != c_out {
                    return Err(validation("identity bank needs c_in == c_out"));
                }
                let mut v = store.uniform_values(n, noise);
                for kk in 0..k {
                    for o in 0..c_out {
                        for i in 0..c_in {
                            for t in 0..9 {
                                let idx = ((kk * c_out + o) * c_in + i) * 9 + t;
                                if o == i && t == 4 {
                                    v[idx] += gain;
                                }
                            }
                        }
                    }
                }
                Init::Values(v)
            }
        };
        Ok(Self {
            c_in,
            c_out,
            kernels: store.param(&format!("{name}.kernels"), (k, c_out, c_in, 3, 3), kinit)?,
            biases: store.param(&format!("{name}.biases"), (k, c_out), Init::Zeros)?,
            mlp1: Linear::new(store, &format!("{name}.mlp1"), 2, MIX_HIDDEN)?,
            mlp2: Linear::new(store, &format!("{name}.mlp2"), MIX_HIDDEN, k)?,
        })
    }

    pub fn num_kernels(&self) -> usize {
        self.kernels.dim(0).unwrap_or(0)
    }

    /// Softmax mixing weights `(B, K)` for a `(B, 2)` batch of `d`.
    pub fn mixing_weights(&self, d: &Tensor) -> Result<Tensor> {
        let h = self.mlp1.forward(d)?.silu()?;
        Ok(candle_nn::ops::softmax(&self.mlp2.forward(&h)?, 1)?)
    }

    /// Assembled kernels `(B, C_out, C_in, 3, 3)` and biases `(B, C_out)`.
    pub fn assemble(&self, d: &Tensor) -> Result<(Tensor, Tensor)> {
        let w = self.mixing_weights(d)?;
        let k = self.num_kernels();
        let flat = self.kernels.reshape((k, self.c_out * self.c_in * 9))?;
        let kern = w.matmul(&flat)?.reshape(((), self.c_out, self.c_in, 3, 3))?;
        let bias = w.matmul(&self.biases)?;
        Ok((kern, bias))
    }

    /// Per-sample 3×3 convolution (padding 1) with the assembled kernel.
    pub fn forward(&self, f: &Tensor, d: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = f.dims4()?;
        if c != self.c_in {
            return Err(validation(format!("dynamic conv expects {} channels, got {c}", self.c_in)));
        }
        if d.dims() != [b, 2] {
            return Err(validation(format!("d must have shape ({b}, 2), got {:?}", d.dims())));
        }
        let (kern, bias) = self.assemble(d)?;
        let kern = kern.reshape((b * self.c_out, self.c_in, 3, 3))?;
        let y = f.reshape((1, b * c, h, w))?.conv2d(&kern, 1, 1, 1, b)?;
        Ok(y.reshape((b, self.c_out, h, w))?.broadcast_add(&bias.reshape((b, self.c_out, 1, 1))?)?)
    }
}

/// `f_x + Φᵀ(f_y) − Φᵀ(Φ(f_x))`.
pub fn latent_unfold(
    f_x: &Tensor,
    f_y: &Tensor,
    phi: &DynamicKernelBank,
    phi_t: &DynamicKernelBank,
    d: &Tensor,
) -> Result<Tensor> {
    if f_x.dims() != f_y.dims() {
        return Err(validation(format!("f_x {:?} and f_y {:?} differ in shape", f_x.dims(), f_y.dims())));
    }
    let back = phi_t.forward(&phi.forward(f_x, d)?, d)?;
    Ok(((f_x + phi_t.forward(f_y, d)?)? - back)?)
}

/// Guidance parameters attached to one UNet block.
#[derive(Debug, Clone)]
pub struct DuigBlock {
    pub variant: AblationVariant,
    pub dam: Option<DamBlock>,
    pub phi: Option<DynamicKernelBank>,
    pub phi_t: Option<DynamicKernelBank>,
}

#[derive(Debug, Clone, Copy)]
pub struct DuigInit {
    pub dam: DamInit,
    pub phi: BankInit,
    pub phi_t: BankInit,
    pub kernels: usize,
}

impl Default for DuigInit {
    fn default() -> Self {
        Self {
            dam: DamInit::Calibrated(0.01),
            phi: BankInit::Identity { gain: 1.0, noise: 0.01 },
            phi_t: BankInit::Identity { gain: 0.0, noise: 0.01 },
            kernels: DEFAULT_KERNELS,
        }
    }
}

impl DuigBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        variant: AblationVariant,
        channels: usize,
        feat_size: usize,
        view_size: usize,
        init: DuigInit,
    ) -> Result<Self> {
        let dam = if variant.uses_duig() {
            Some(DamBlock::new(store, &format!("{name}.dam"), channels, feat_size, view_size, init.dam)?)
        } else {
            None
        };
        let bank_ch = match variant {
            AblationVariant::Full => Some(channels),
            AblationVariant::PixelUnfold => Some(3),
            _ => None,
        };
        let (phi, phi_t) = match bank_ch {
            Some(c) => {
                let prefix = if variant == AblationVariant::PixelUnfold { "pix_" } else { "" };
                (
                    Some(DynamicKernelBank::new(store, &format!("{name}.{prefix}phi"), c, c, init.kernels, init.phi)?),
                    Some(DynamicKernelBank::new(store, &format!("{name}.{prefix}phi_t"), c, c, init.kernels, init.phi_t)?),
                )
            }
            None => (None, None),
        };
        Ok(Self { variant, dam, phi, phi_t })
    }

    /// One guidance application on block output `f` with the matching LR
    /// view `x_lr` `(B, 3, N, N)` and degradation batch `d` `(B, 2)`.
    pub fn apply(&self, f: &Tensor, x_lr: &Tensor, d: &Tensor) -> Result<Tensor> {
        let dam = match (&self.dam, self.variant) {
            (_, AblationVariant::TpBaseline) => return Ok(f.clone()),
            (Some(dam), _) => dam,
            (None, _) => return Err(validation("guidance block is missing its DAM")),
        };
        match self.variant {
            AblationVariant::LatentAdd => Ok((dam.p2l(&dam.l2p(f)?)? + dam.p2l(x_lr)?)?),
            AblationVariant::Full => {
                let (phi, phi_t) = self.banks()?;
                let f_x = dam.p2l(&dam.l2p(f)?)?;
                let f_y = dam.p2l(x_lr)?;
                latent_unfold(&f_x, &f_y, phi, phi_t, d)
            }
            AblationVariant::PixelUnfold => {
                let (phi, phi_t) = self.banks()?;
                let x = dam.l2p(f)?;
                let x_hat = latent_unfold(&x, x_lr, phi, phi_t, d)?;
                dam.p2l(&x_hat)
            }
            AblationVariant::TpBaseline => unreachable!(),
        }
    }

    fn banks(&self) -> Result<(&DynamicKernelBank, &DynamicKernelBank)> {
        match (&self.phi, &self.phi_t) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(validation("guidance block is missing its kernel banks")),
        }
    }
}

/// Identity-collapsed bank: every kernel is the 3×3 identity with zero bias.
pub fn identity_bank(store: &mut ParamStore, name: &str, c: usize, k: usize) -> Result<DynamicKernelBank> {
    DynamicKernelBank::new(store, name, c, c, k, BankInit::Identity { gain: 1.0, noise: 0.0 })
}
