//! Seeded real-world degradation synthesis on fisheye hemispheres and
//! degradation-level estimation.
//!
//! A pair is produced by projecting the HR panorama to two equidistant
//! fisheye hemispheres, running a two-order blur → resize → noise → JPEG
//! chain on both with shared sampled parameters, resizing to the target
//! scale and projecting back to ERP.

mod dataset;
mod ops;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use dataset::{list_images, load_dataset, synthesize_dataset, DatasetItem, PairMeta};
pub use ops::{add_noise, add_noise_stream, apply_blur, jpeg_roundtrip, BlurKernel, NoiseKind, MAX_KERNEL_RADIUS};

use crate::error::{validation, Error, Result};
use crate::raster::{ErpImage, Raster};
use crate::resample::{resize_to, resize_with_edges, Edges, ResizeMode};
use crate::sphere_proj::{erp_to_fisheye, fisheye_to_erp, FisheyePair};

/// Noise level `d_n` and blur level `d_b`, both in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationParams {
    pub d_n: f64,
    pub d_b: f64,
}

impl DegradationParams {
    pub fn new(d_n: f64, d_b: f64) -> Result<Self> {
        let p = Self { d_n, d_b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("d_n", self.d_n), ("d_b", self.d_b)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(validation(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.d_n, self.d_b]
    }
}

/// Closed interval `[lo, hi]` sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }

    fn check(&self, name: &str, min: f64, max: f64) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi && self.lo >= min && self.hi <= max) {
            return Err(Error::Config(format!(
                "{name} range [{}, {}] must be non-empty and within [{min}, {max}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlurKind {
    Isotropic,
    Anisotropic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Default,
    Severe,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Self::Default),
            "severe" => Ok(Self::Severe),
            _ => Err(Error::Usage(format!("unknown preset '{s}' (expected default|severe)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationConfig {
    pub blur_enabled: bool,
    pub blur_kinds: Vec<BlurKind>,
    pub blur_sigma: Range,
    pub resize_enabled: bool,
    pub resize_scale: Range,
    pub resize_modes: Vec<ResizeMode>,
    pub noise_enabled: bool,
    pub noise_kinds: Vec<NoiseKind>,
    pub noise_level: Range,
    pub jpeg_enabled: bool,
    pub jpeg_quality: Range,
    pub second_order_prob: f64,
    pub scale: usize,
    pub final_mode: ResizeMode,
}

pub const BLUR_SIGMA_BOUNDS: (f64, f64) = (0.1, 10.0 / 3.0);
pub const NOISE_LEVEL_BOUNDS: (f64, f64) = (0.0, 0.5);
pub const RESIZE_SCALE_BOUNDS: (f64, f64) = (0.25, 2.0);

impl Default for DegradationConfig {
    fn default() -> Self {
        Self {
            blur_enabled: true,
            blur_kinds: vec![BlurKind::Isotropic, BlurKind::Anisotropic],
            blur_sigma: Range::new(0.2, 3.0),
            resize_enabled: true,
            resize_scale: Range::new(0.5, 1.5),
            resize_modes: vec![ResizeMode::Bicubic, ResizeMode::Bilinear, ResizeMode::Area],
            noise_enabled: true,
            noise_kinds: vec![NoiseKind::Gaussian, NoiseKind::Poisson],
            noise_level: Range::new(0.0, 0.1),
            jpeg_enabled: true,
            jpeg_quality: Range::new(30.0, 95.0),
            second_order_prob: 0.5,
            scale: 4,
            final_mode: ResizeMode::Bicubic,
        }
    }
}

impl DegradationConfig {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Default => Self::default(),
            Preset::Severe => Self {
                noise_level: Range::new(0.05, 0.2),
                jpeg_quality: Range::new(15.0, 50.0),
                second_order_prob: 0.8,
                ..Self::default()
            },
        }
    }

    /// Only the final bicubic resize remains.
    pub fn skeleton(scale: usize) -> Self {
        Self {
            blur_enabled: false,
            resize_enabled: false,
            noise_enabled: false,
            jpeg_enabled: false,
            second_order_prob: 0.0,
            scale,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.blur_sigma.check("blur sigma", BLUR_SIGMA_BOUNDS.0, BLUR_SIGMA_BOUNDS.1)?;
        self.noise_level.check("noise level", NOISE_LEVEL_BOUNDS.0, NOISE_LEVEL_BOUNDS.1)?;
        self.resize_scale.check("resize scale", RESIZE_SCALE_BOUNDS.0, RESIZE_SCALE_BOUNDS.1)?;
        self.jpeg_quality.check("jpeg quality", 1.0, 100.0)?;
        if !(0.0..=1.0).contains(&self.second_order_prob) {
            return Err(Error::Config(format!("second-order probability {} not in [0, 1]", self.second_order_prob)));
        }
        if self.scale < 1 {
            return Err(Error::Config("scale factor must be >= 1".into()));
        }
        for (name, empty, enabled) in [
            ("blur kinds", self.blur_kinds.is_empty(), self.blur_enabled),
            ("resize modes", self.resize_modes.is_empty(), self.resize_enabled),
            ("noise kinds", self.noise_kinds.is_empty(), self.noise_enabled),
        ] {
            if enabled && empty {
                return Err(Error::Config(format!("{name} must not be empty when the stage is enabled")));
            }
        }
        Ok(())
    }

    /// Largest achievable total (root-sum-square over orders) of a
    /// per-order quantity whose range tops out at `hi`.
    fn total_upper(&self, hi: f64) -> f64 {
        if self.second_order_prob > 0.0 {
            hi * 2f64.sqrt()
        } else {
            hi
        }
    }

    /// Maps a total blur sigma and total noise level into `[0, 1]²`.
    pub fn normalize(&self, blur_total: Option<f64>, noise_total: Option<f64>) -> DegradationParams {
        let norm = |v: Option<f64>, r: Range| match v {
            None => 0.0,
            Some(v) => {
                let (lo, hi) = (r.lo, self.total_upper(r.hi));
                // Root-sum-square totals of maximal samples can land an ulp
                // away from the analytic upper bound.
                if (v - hi).abs() <= 1e-12 * hi.abs().max(1.0) {
                    return 1.0;
                }
                if hi <= lo {
                    if v >= hi {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
                }
            }
        };
        DegradationParams { d_n: norm(noise_total, self.noise_level), d_b: norm(blur_total, self.blur_sigma) }
    }
}

/// One applied operation with its sampled parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Stage {
    Blur { order: u8, kind: BlurKind, sigma_x: f64, sigma_y: f64, theta: f64 },
    Resize { order: u8, scale: f64, mode: ResizeMode },
    Noise { order: u8, kind: NoiseKind, level: f64, seed: u64 },
    Jpeg { order: u8, quality: u8 },
    FinalResize { height: usize, width: usize, mode: ResizeMode },
}

impl Stage {
    /// Applies the stage to one hemisphere; `stream` decorrelates noise
    /// between hemispheres that share a stage log.
    pub fn apply(&self, img: &Raster, stream: u64) -> Result<Raster> {
        let out = match *self {
            Stage::Blur { sigma_x, sigma_y, theta, .. } => {
                apply_blur(img, &BlurKernel::gaussian(sigma_x, sigma_y, theta)?)?
            }
            Stage::Resize { scale, mode, .. } => resize_with_edges(img, scale, mode, Edges::PLANAR)?,
            Stage::Noise { kind, level, seed, .. } => add_noise_stream(img, kind, level, seed, stream)?,
            Stage::Jpeg { quality, .. } => jpeg_roundtrip(img, quality)?,
            Stage::FinalResize { height, width, mode } => resize_to(img, height, width, mode, Edges::PLANAR)?,
        };
        Ok(out.mapv(|v| v.clamp(0.0, 1.0)))
    }
}

pub type StageLog = Vec<Stage>;

/// Effective sigma of a blur stage (geometric mean of the axis sigmas).
fn effective_sigma(sx: f64, sy: f64) -> f64 {
    (sx * sy).sqrt()
}

/// Degradation levels implied by a stage log under `cfg`'s ranges.
pub fn params_from_log(log: &[Stage], cfg: &DegradationConfig) -> DegradationParams {
    let mut blur: Option<f64> = None;
    let mut noise: Option<f64> = None;
    for st in log {
        match *st {
            Stage::Blur { sigma_x, sigma_y, .. } => {
                let s = effective_sigma(sigma_x, sigma_y);
                blur = Some(blur.unwrap_or(0.0) + s * s);
            }
            Stage::Noise { level, .. } => noise = Some(noise.unwrap_or(0.0) + level * level),
            _ => {}
        }
    }
    cfg.normalize(blur.map(f64::sqrt), noise.map(f64::sqrt))
}

fn pick<T: Copy>(items: &[T], rng: &mut ChaCha8Rng) -> T {
    items[rng.random_range(0..items.len())]
}

/// Samples the stage log for a square image of side `side`.
pub fn sample_stages(cfg: &DegradationConfig, side: usize, rng: &mut ChaCha8Rng) -> Result<StageLog> {
    cfg.validate()?;
    if side % cfg.scale != 0 {
        return Err(validation(format!("side {side} is not divisible by scale {}", cfg.scale)));
    }
    let mut log = Vec::new();
    let orders = if rng.random::<f64>() < cfg.second_order_prob { 2 } else { 1 };
    for order in 1..=orders as u8 {
        if cfg.blur_enabled {
            let kind = pick(&cfg.blur_kinds, rng);
            let (sigma_x, sigma_y, theta) = match kind {
                BlurKind::Isotropic => {
                    let s = cfg.blur_sigma.sample(rng);
                    (s, s, 0.0)
                }
                BlurKind::Anisotropic => {
                    (cfg.blur_sigma.sample(rng), cfg.blur_sigma.sample(rng), rng.random_range(0.0..std::f64::consts::PI))
                }
            };
            log.push(Stage::Blur { order, kind, sigma_x, sigma_y, theta });
        }
        if cfg.resize_enabled {
            log.push(Stage::Resize { order, scale: cfg.resize_scale.sample(rng), mode: pick(&cfg.resize_modes, rng) });
        }
        if cfg.noise_enabled {
            log.push(Stage::Noise {
                order,
                kind: pick(&cfg.noise_kinds, rng),
                level: cfg.noise_level.sample(rng),
                seed: rng.random(),
            });
        }
        if cfg.jpeg_enabled {
            log.push(Stage::Jpeg { order, quality: cfg.jpeg_quality.sample(rng).round() as u8 });
        }
    }
    let target = side / cfg.scale;
    log.push(Stage::FinalResize { height: target, width: target, mode: cfg.final_mode });
    Ok(log)
}

/// Runs a stage log on one planar image.
pub fn degrade_planar(img: &Raster, log: &[Stage], stream: u64) -> Result<Raster> {
    let mut cur = img.clone();
    for st in log {
        cur = st.apply(&cur, stream)?;
    }
    Ok(cur)
}

/// Replays a stage log on both hemispheres of `hr` and projects back to ERP.
pub fn replay(hr: &ErpImage, log: &[Stage]) -> Result<ErpImage> {
    let side = hr.height();
    let fish = erp_to_fisheye(hr, side)?;
    let front = degrade_planar(&fish.front, log, 0)?;
    let back = degrade_planar(&fish.back, log, 1)?;
    let lr_side = front.dim().1;
    if lr_side == 0 || side % lr_side != 0 {
        return Err(validation(format!("stage log ends at side {lr_side}, which does not divide {side}")));
    }
    let lr = fisheye_to_erp(&FisheyePair::new(front, back)?, lr_side)?;
    Ok(lr.clamped())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub hr: ErpImage,
    pub lr: ErpImage,
    pub params: DegradationParams,
    pub seed: u64,
    pub stage_log: StageLog,
}

pub fn synthesize_pair(hr: &ErpImage, cfg: &DegradationConfig, seed: u64) -> Result<PairRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stage_log = sample_stages(cfg, hr.height(), &mut rng)?;
    let lr = replay(hr, &stage_log)?;
    let params = params_from_log(&stage_log, cfg);
    Ok(PairRecord { hr: hr.clone(), lr, params, seed, stage_log })
}

/// Bicubic ERP downsampling of the HR image to the LR grid; the clean
/// reference for measuring input degradation.
pub fn downsampled_reference(hr: &ErpImage, scale: usize) -> Result<ErpImage> {
    let h = hr.height() / scale;
    ErpImage::new(resize_to(hr.pixels(), h, 2 * h, ResizeMode::Bicubic, Edges::ERP)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMode {
    Oracle,
    Learned,
}

impl std::str::FromStr for EstimateMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "learned" => Ok(Self::Learned),
            _ => Err(Error::Usage(format!("unknown degradation source '{s}' (expected oracle|learned)"))),
        }
    }
}

/// A trained regressor from an LR view to degradation levels.
pub trait DegradationPredictor: Send + Sync {
    fn predict(&self, view: &Raster) -> Result<DegradationParams>;
}

pub fn estimate_degradation(
    lr_view: &Raster,
    mode: EstimateMode,
    record: Option<&PairRecord>,
    predictor: Option<&dyn DegradationPredictor>,
) -> Result<DegradationParams> {
    match mode {
        EstimateMode::Oracle => record
            .map(|r| r.params)
            .ok_or_else(|| Error::Usage("oracle degradation estimate requires a pair record".into())),
        EstimateMode::Learned => {
            let p = predictor.ok_or_else(|| Error::Usage("learned degradation estimate requires a predictor".into()))?;
            let d = p.predict(lr_view)?;
            d.validate()?;
            Ok(d)
        }
    }
}
