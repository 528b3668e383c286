//! The assembled model (autoencoder, UNet with LoRA, guidance blocks,
//! degradation predictor) and the panorama inference pipeline.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use candle_core::{DType, Tensor};
use omnisr::degrade::{estimate_degradation, DegradationParams, EstimateMode};
use omnisr::sphere_proj::{erp_to_tangent, tangent_to_erp, TangentGrid, TangentViewSet};
use omnisr::ErpImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{AeMode, ToyAutoencoder};
use crate::duig::{d_tensor, AblationVariant, DamInit, DuigBlock, DuigInit};
use crate::error::{validation, Error, Result};
use crate::lora::LoraEmbedding;
use crate::params::ParamStore;
use crate::predictor::LearnedPredictor;
use crate::tensor::{raster_to_tensor, tensor_to_raster};
use crate::unet::{ToyUNet, NUM_BLOCKS};

pub const CHECKPOINT_FORMAT: &str = "omnisr-checkpoint-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub variant: AblationVariant,
    pub ae_mode: AeMode,
    pub view_size: usize,
    pub latent_channels: usize,
    pub base_width: usize,
    pub lora_rank: usize,
    pub kernels: usize,
    pub scale: usize,
    pub pre_upsample: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: AblationVariant::Full,
            ae_mode: AeMode::Learned,
            view_size: 128,
            latent_channels: 4,
            base_width: 32,
            lora_rank: 4,
            kernels: crate::duig::DEFAULT_KERNELS,
            scale: 4,
            pre_upsample: 2,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let lat = match self.ae_mode {
            AeMode::Learned => self.view_size / crate::autoencoder::AE_DOWNSCALE,
            AeMode::Identity => self.view_size,
        };
        if self.view_size % 32 != 0 || lat % 8 != 0 || lat == 0 {
            return Err(validation(format!("view size {} must be a positive multiple of 32", self.view_size)));
        }
        if self.latent_channels == 0 || self.base_width == 0 || self.lora_rank == 0 || self.kernels == 0 {
            return Err(validation("model widths, rank and kernel count must be positive"));
        }
        if self.scale < 1 || self.pre_upsample < 1 {
            return Err(validation("scale and pre-upsample factor must be ≥ 1"));
        }
        Ok(())
    }

    pub fn grid(&self) -> TangentGrid {
        TangentGrid::default_with_patch(self.view_size)
    }
}

/// Instrumentation of the single-step contract.
#[derive(Debug, Default)]
pub struct Counters {
    pub unet_forwards: AtomicUsize,
    pub block_executions: AtomicUsize,
    pub duig_applications: AtomicUsize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CounterSnapshot {
    pub unet_forwards: usize,
    pub block_executions: usize,
    pub duig_applications: usize,
}

impl Counters {
    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            unet_forwards: self.unet_forwards.load(Ordering::SeqCst),
            block_executions: self.block_executions.load(Ordering::SeqCst),
            duig_applications: self.duig_applications.load(Ordering::SeqCst),
        }
    }

    pub fn reset(&self) {
        self.unet_forwards.store(0, Ordering::SeqCst);
        self.block_executions.store(0, Ordering::SeqCst);
        self.duig_applications.store(0, Ordering::SeqCst);
    }
}

#[derive(Debug)]
pub struct RealOsr {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub ae: ToyAutoencoder,
    pub unet: ToyUNet,
    pub duig: Vec<DuigBlock>,
    pub lora_embed: LoraEmbedding,
    pub predictor: LearnedPredictor,
    pub counters: Counters,
    guidance: bool,
}

impl RealOsr {
    pub fn new(config: ModelConfig, dtype: DType) -> Result<Self> {
        let store = ParamStore::new(dtype, config.init_seed);
        Self::from_store(config, store)
    }

    /// Builds the modules on `store`, reusing any parameter already present.
    pub fn from_store(config: ModelConfig, mut store: ParamStore) -> Result<Self> {
        Self::build(config, &mut store, DuigInit::default()).map(|parts| parts.finish(store))
    }

    pub fn with_init(config: ModelConfig, dtype: DType, init: DuigInit) -> Result<Self> {
        let mut store = ParamStore::new(dtype, config.init_seed);
        Self::build(config, &mut store, init).map(|parts| parts.finish(store))
    }

    fn build(config: ModelConfig, store: &mut ParamStore, init: DuigInit) -> Result<Parts> {
        config.validate()?;
        let ae = ToyAutoencoder::new(store, config.ae_mode, config.latent_channels, config.lora_rank)?;
        let lora_embed = LoraEmbedding::new(store, "lora.embed")?;
        let unet = ToyUNet::new(store, ae.latent_channels, config.base_width, config.lora_rank)?;
        let n = config.view_size;
        let duig = unet
            .block_shapes(ae.latent_size(n))
            .into_iter()
            .enumerate()
            .map(|(b, (c, side))| {
                let ratio = n / side;
                let mut init = DuigInit { kernels: config.kernels, ..init };
                if matches!(init.dam, DamInit::Calibrated(_)) && c > 3 * ratio * ratio {
                    init.dam = DamInit::Random;
                }
                DuigBlock::new(store, &format!("duig.b{}", b + 1), config.variant, c, side, n, init)
            })
            .collect::<Result<Vec<_>>>()?;
        let predictor = LearnedPredictor::new(store)?;
        Ok(Parts { config, ae, unet, duig, lora_embed, predictor })
    }

    pub fn variant(&self) -> AblationVariant {
        self.config.variant
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    /// Disables (or re-enables) every guidance application.
    pub fn set_guidance(&mut self, on: bool) {
        self.guidance = on;
    }

    /// Per-layer LoRA mixing matrices `M(d)` keyed by layer name.
    pub fn lora_modulate(&self, d: &Tensor) -> Result<Vec<(String, Tensor)>> {
        let emb = self.lora_embed.forward(d)?;
        let mut out = Vec::new();
        for (i, l) in self.ae.lora_layers().into_iter().enumerate() {
            out.push((format!("ae.enc.c{}", i + 1), l.scales(&emb)?));
        }
        for (b, block) in self.unet.blocks.iter().enumerate() {
            let [c1, c2] = block.lora_layers();
            out.push((format!("unet.b{}.conv1", b + 1), c1.scales(&emb)?));
            out.push((format!("unet.b{}.conv2", b + 1), c2.scales(&emb)?));
        }
        Ok(out)
    }

    pub fn encode(&self, x: &Tensor, d: &Tensor) -> Result<Tensor> {
        let emb = self.lora_embed.forward(d)?;
        self.ae.encode(x, Some(&emb))
    }

    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        self.ae.decode(z)
    }

    /// One UNet traversal with a guidance application after every block.
    pub fn denoise_with_duig(&self, z: &Tensor, x_lr: &Tensor, d: &Tensor) -> Result<Tensor> {
        let emb = self.lora_embed.forward(d)?;
        self.denoise_inner(z, x_lr, d, &emb)
    }

    fn denoise_inner(&self, z: &Tensor, x_lr: &Tensor, d: &Tensor, emb: &Tensor) -> Result<Tensor> {
        let b = z.dim(0)?;
        let n = self.config.view_size;
        if x_lr.dims() != [b, 3, n, n] {
            return Err(validation(format!("LR view batch must be ({b}, 3, {n}, {n}), got {:?}", x_lr.dims())));
        }
        if z.dims4()?.2 != self.ae.latent_size(n) {
            return Err(validation(format!("latent {:?} does not match view size {n}", z.dims())));
        }
        self.counters.unet_forwards.fetch_add(b, Ordering::SeqCst);
        self.unet.forward_with(z, emb, |blk, f| {
            self.counters.block_executions.fetch_add(b, Ordering::SeqCst);
            if !self.guidance {
                return Ok(f);
            }
            self.counters.duig_applications.fetch_add(b, Ordering::SeqCst);
            self.duig[blk].apply(&f, x_lr, d)
        })
    }

    /// Plain UNet traversal without guidance or instrumentation.
    pub fn denoise_plain(&self, z: &Tensor, d: &Tensor) -> Result<Tensor> {
        let emb = self.lora_embed.forward(d)?;
        self.unet.forward(z, &emb)
    }

    /// LR views `(B, 3, N, N)` and `d` `(B, 2)` → SR views `(B, 3, N, N)`.
    pub fn forward_views(&self, x_lr: &Tensor, d: &Tensor) -> Result<Tensor> {
        let emb = self.lora_embed.forward(d)?;
        let z = self.ae.encode(x_lr, Some(&emb))?;
        let z = self.denoise_inner(&z, x_lr, d, &emb)?;
        self.ae.decode(&z)
    }

    pub fn metadata(&self) -> Result<HashMap<String, String>> {
        Ok(HashMap::from([
            ("format".to_string(), CHECKPOINT_FORMAT.to_string()),
            ("config".to_string(), serde_json::to_string(&self.config)?),
            ("variant".to_string(), self.config.variant.name().to_string()),
        ]))
    }

    pub fn save(&self, path: &Path, extra: &[(&str, String)]) -> Result<()> {
        let mut meta = self.metadata()?;
        meta.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
        self.store.save(path, meta)
    }

    /// Loads a checkpoint; every module parameter must be present in it.
    pub fn load(path: &Path) -> Result<(Self, HashMap<String, String>)> {
        let (store, meta) = ParamStore::load(path, DType::F32)?;
        if meta.get("format").map(String::as_str) != Some(CHECKPOINT_FORMAT) {
            return Err(Error::Checkpoint(format!("{} is not a model checkpoint", path.display())));
        }
        let config: ModelConfig = serde_json::from_str(meta.get("config").map(String::as_str).unwrap_or("{}"))?;
        let before = store.len();
        let model = Self::from_store(config, store)?;
        if model.store.len() != before {
            return Err(Error::Checkpoint(format!(
                "{} lacks {} parameters required by variant {}",
                path.display(),
                model.store.len() - before,
                model.config.variant
            )));
        }
        Ok((model, meta))
    }
}

struct Parts {
    config: ModelConfig,
    ae: ToyAutoencoder,
    unet: ToyUNet,
    duig: Vec<DuigBlock>,
    lora_embed: LoraEmbedding,
    predictor: LearnedPredictor,
}

impl Parts {
    fn finish(self, store: ParamStore) -> RealOsr {
        debug_assert_eq!(self.duig.len(), NUM_BLOCKS);
        RealOsr {
            config: self.config,
            store,
            ae: self.ae,
            unet: self.unet,
            duig: self.duig,
            lora_embed: self.lora_embed,
            predictor: self.predictor,
            counters: Counters::default(),
            guidance: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    Serial,
    Parallel,
}

impl FromStr for ExecMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "serial" => Ok(Self::Serial),
            "parallel" => Ok(Self::Parallel),
            _ => Err(validation(format!("unknown mode '{s}' (expected serial|parallel)"))),
        }
    }
}

/// Where each view's degradation levels come from.
#[derive(Debug, Clone, Copy)]
pub enum DSource {
    /// Ground-truth levels of the pair, shared by every view.
    Oracle(DegradationParams),
    /// The model's own predictor, run per view.
    Learned,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub image: ErpImage,
    pub view_d: Vec<DegradationParams>,
    pub view_seconds: Vec<f64>,
    pub total_seconds: f64,
}

/// LR panorama → SR panorama of `scale ×` the size: project to tangent
/// views, super-resolve each view with one guided denoising step, fuse.
pub fn realosr_pipeline(model: &RealOsr, erp_lr: &ErpImage, mode: ExecMode, d_source: DSource) -> Result<PipelineOutput> {
    let start = Instant::now();
    let cfg = &model.config;
    let grid = cfg.grid();
    let views = erp_to_tangent(erp_lr, &grid, cfg.scale * cfg.pre_upsample)?;
    if views.channels() != 3 {
        return Err(validation(format!("pipeline expects RGB input, got {} channels", views.channels())));
    }
    let run = |view: &omnisr::Raster| -> Result<(omnisr::Raster, DegradationParams, f64)> {
        let t0 = Instant::now();
        let d = match d_source {
            DSource::Oracle(p) => {
                p.validate()?;
                p
            }
            DSource::Learned => estimate_degradation(view, EstimateMode::Learned, None, Some(&model.predictor))?,
        };
        let x = raster_to_tensor(view, model.dtype())?;
        let y = model.forward_views(&x, &d_tensor(&[d], model.dtype())?)?;
        let out = tensor_to_raster(&y)?.mapv(|v| v.clamp(0.0, 1.0));
        Ok((out, d, t0.elapsed().as_secs_f64()))
    };
    let results: Vec<_> = match mode {
        ExecMode::Serial => views.views.iter().map(run).collect::<Result<_>>()?,
        ExecMode::Parallel => views.views.par_iter().map(run).collect::<Result<_>>()?,
    };
    let mut sr_views = Vec::with_capacity(results.len());
    let mut view_d = Vec::with_capacity(results.len());
    let mut view_seconds = Vec::with_capacity(results.len());
    for (v, d, t) in results {
        sr_views.push(v);
        view_d.push(d);
        view_seconds.push(t);
    }
    let set = TangentViewSet::new(sr_views, grid, views.valid_mask)?;
    let image = tangent_to_erp(&set, cfg.scale * erp_lr.height(), cfg.pre_upsample)?.clamped();
    Ok(PipelineOutput { image, view_d, view_seconds, total_seconds: start.elapsed().as_secs_f64() })
}
