//! Autoencoder pretraining, predictor fitting and the main adversarial
//! training loop.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::{DType, Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use omnisr::degrade::{load_dataset, DatasetItem};
use omnisr::degrade::{degrade_planar, params_from_log, sample_stages, DegradationConfig, Preset};
use omnisr::resample::{resize_to, Edges, ResizeMode};
use omnisr::sphere_proj::erp_to_tangent;
use omnisr::synthetic::texture;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::AeMode;
use crate::denoiser::{ModelConfig, RealOsr};
use crate::disc::{PatchDiscriminator, DISC_PREFIX};
use crate::duig::AblationVariant;
use crate::error::{validation, Result};
use crate::losses::{charbonnier_loss, gan_losses, total_loss, LossWeights, CHARBONNIER_EPS, PERCEPTUAL_LABEL};
use crate::predictor::PREDICTOR_PREFIX;
use crate::tensor::{raster_to_tensor, scalar};

/// Parameters updated by the main stage.
pub const TRAINABLE_PREFIXES: [&str; 3] = ["lora.", "unet.", "duig."];
pub const DECODER_PREFIX: &str = "ae.dec.";
pub const ENCODER_PREFIX: &str = "ae.enc.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    pub variant: AblationVariant,
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub weights: LossWeights,
    pub seed: u64,
    pub disc_width: usize,
    /// Fixed views on which the initial and final total loss are measured.
    pub probe_views: usize,
    pub ae_pretrain_steps: usize,
    pub ae_lr: f64,
    pub ae_batch: usize,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("dataset"),
            out_dir: PathBuf::from("runs/train"),
            variant: AblationVariant::Full,
            steps: 200,
            lr: 1e-5,
            batch: 4,
            weights: LossWeights::default(),
            seed: 0,
            disc_width: 16,
            probe_views: 8,
            ae_pretrain_steps: 300,
            ae_lr: 1e-3,
            ae_batch: 8,
            model: ModelConfig { view_size: 64, ..ModelConfig::default() },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.model.validate()?;
        if self.batch == 0 || self.ae_batch == 0 || self.probe_views == 0 {
            return Err(validation("batch sizes and probe size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite() && self.ae_lr > 0.0 && self.ae_lr.is_finite()) {
            return Err(validation("learning rates must be positive"));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig { variant: self.variant, init_seed: self.seed, ..self.model.clone() }
    }
}

/// All tangent views of a dataset, stacked: LR views pre-upsampled to the
/// view size, the matching HR views and per-view `d`.
#[derive(Debug, Clone)]
pub struct ViewBank {
    pub lr: Tensor,
    pub hr: Tensor,
    pub d: Tensor,
}

impl ViewBank {
    pub fn len(&self) -> usize {
        self.lr.dim(0).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Result<(Tensor, Tensor, Tensor)> {
        let ids = Tensor::from_vec(idx.iter().map(|&i| i as u32).collect::<Vec<_>>(), idx.len(), &Device::Cpu)?;
        Ok((self.lr.index_select(&ids, 0)?, self.hr.index_select(&ids, 0)?, self.d.index_select(&ids, 0)?))
    }
}

pub fn build_view_bank(items: &[DatasetItem], cfg: &ModelConfig, dtype: DType) -> Result<ViewBank> {
    if items.is_empty() {
        return Err(validation("dataset is empty"));
    }
    let grid = cfg.grid();
    let per_item = items
        .par_iter()
        .map(|it| {
            let r = &it.record;
            if r.hr.height() != cfg.scale * r.lr.height() {
                return Err(validation(format!("{}: dataset scale does not match model scale {}", it.stem, cfg.scale)));
            }
            let lr = erp_to_tangent(&r.lr, &grid, cfg.scale * cfg.pre_upsample)?;
            let hr = erp_to_tangent(&r.hr, &grid, cfg.pre_upsample)?;
            let mut out = Vec::with_capacity(lr.len());
            for (l, h) in lr.views.iter().zip(&hr.views) {
                out.push((raster_to_tensor(l, dtype)?, raster_to_tensor(h, dtype)?, [r.params.d_n, r.params.d_b]));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let flat: Vec<_> = per_item.into_iter().flatten().collect();
    let lr = Tensor::cat(&flat.iter().map(|s| &s.0).collect::<Vec<_>>(), 0)?;
    let hr = Tensor::cat(&flat.iter().map(|s| &s.1).collect::<Vec<_>>(), 0)?;
    let dv: Vec<f64> = flat.iter().flat_map(|s| s.2).collect();
    let d = Tensor::from_vec(dv, (flat.len(), 2), &Device::Cpu)?.to_dtype(dtype)?;
    Ok(ViewBank { lr, hr, d })
}

fn adam(vars: Vec<candle_core::Var>, lr: f64) -> Result<AdamW> {
    Ok(AdamW::new(vars, ParamsAdamW { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 })?)
}

fn sample_batch(rng: &mut ChaCha8Rng, n: usize, batch: usize) -> Vec<usize> {
    (0..batch).map(|_| rng.random_range(0..n)).collect()
}

/// Reconstruction pretraining of the base encoder and decoder on every LR
/// and HR view. Returns the final batch loss.
pub fn pretrain_autoencoder(model: &RealOsr, bank: &ViewBank, steps: usize, lr: f64, batch: usize, seed: u64) -> Result<f64> {
    if model.config.ae_mode == AeMode::Identity || steps == 0 {
        return Ok(0.0);
    }
    let all = Tensor::cat(&[&bank.lr, &bank.hr], 0)?;
    let n = all.dim(0)?;
    let mut opt = adam(model.store.vars_with_prefixes(&[ENCODER_PREFIX, DECODER_PREFIX]), lr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xae);
    let mut last = f64::NAN;
    for _ in 0..steps {
        let idx = sample_batch(&mut rng, n, batch);
        let ids = Tensor::from_vec(idx.iter().map(|&i| i as u32).collect::<Vec<_>>(), idx.len(), &Device::Cpu)?;
        let x = all.index_select(&ids, 0)?;
        let rec = model.ae.decode(&model.ae.encode(&x, None)?)?;
        let loss = charbonnier_loss(&rec, &x, CHARBONNIER_EPS)?;
        opt.backward_step(&loss)?;
        last = scalar(&loss)?;
    }
    Ok(last)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub samples: usize,
    pub heldout: usize,
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub preset: Preset,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self { samples: 500, heldout: 100, steps: 600, lr: 2e-3, batch: 16, seed: 0, preset: Preset::Default }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorReport {
    pub train_mae: f64,
    pub heldout_mae: f64,
}

/// Planar degraded patches with their ground-truth `d`; each LR patch is
/// bicubic-upsampled back to `side`.
pub fn predictor_patches(n: usize, side: usize, cfg: &DegradationConfig, seed: u64, dtype: DType) -> Result<(Tensor, Tensor)> {
    let items = (0..n)
        .into_par_iter()
        .map(|k| {
            let s = seed.wrapping_mul(0x9e37_79b9).wrapping_add(k as u64);
            let hr = texture(side, side, s, 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let log = sample_stages(cfg, side, &mut rng)?;
            let lr = degrade_planar(&hr, &log, 0)?;
            let up = resize_to(&lr, side, side, ResizeMode::Bicubic, Edges::PLANAR)?.mapv(|v| v.clamp(0.0, 1.0));
            let d = params_from_log(&log, cfg);
            Ok((raster_to_tensor(&up, dtype)?, [d.d_n, d.d_b]))
        })
        .collect::<Result<Vec<_>>>()?;
    let x = Tensor::cat(&items.iter().map(|i| &i.0).collect::<Vec<_>>(), 0)?;
    let d: Vec<f64> = items.iter().flat_map(|i| i.1).collect();
    Ok((x, Tensor::from_vec(d, (n, 2), &Device::Cpu)?.to_dtype(dtype)?))
}

/// Fits the model's degradation predictor on synthetic planar patches.
pub fn fit_predictor(model: &RealOsr, cfg: &PredictorConfig) -> Result<PredictorReport> {
    if cfg.samples == 0 || cfg.heldout == 0 || cfg.batch == 0 {
        return Err(validation("predictor training needs samples, held-out samples and a batch size"));
    }
    let dcfg = DegradationConfig::preset(cfg.preset);
    let side = model.config.view_size;
    let (x, d) = predictor_patches(cfg.samples, side, &dcfg, cfg.seed, model.dtype())?;
    let (xh, dh) = predictor_patches(cfg.heldout, side, &dcfg, cfg.seed.wrapping_add(1 << 32), model.dtype())?;
    let mut opt = adam(model.store.vars_with_prefixes(&[PREDICTOR_PREFIX]), cfg.lr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9d);
    for _ in 0..cfg.steps {
        let idx = sample_batch(&mut rng, cfg.samples, cfg.batch);
        let ids = Tensor::from_vec(idx.iter().map(|&i| i as u32).collect::<Vec<_>>(), idx.len(), &Device::Cpu)?;
        let pred = model.predictor.forward(&x.index_select(&ids, 0)?)?;
        let loss = (pred - d.index_select(&ids, 0)?)?.sqr()?.mean_all()?;
        opt.backward_step(&loss)?;
    }
    let mae = |x: &Tensor, d: &Tensor| -> Result<f64> {
        let mut total = 0.0;
        let n = x.dim(0)?;
        for start in (0..n).step_by(64) {
            let len = 64.min(n - start);
            let p = model.predictor.forward(&x.narrow(0, start, len)?)?.detach();
            total += scalar(&(p - d.narrow(0, start, len)?)?.abs()?.sum_all()?)?;
        }
        Ok(total / (2 * n) as f64)
    };
    Ok(PredictorReport { train_mae: mae(&x, &d)?, heldout_mae: mae(&xh, &dh)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub step: usize,
    pub total: f64,
    pub rec: f64,
    pub perc: f64,
    pub gan_g: f64,
    pub d_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub variant: AblationVariant,
    pub steps: usize,
    pub trainable_params: usize,
    pub ae_pretrain_loss: f64,
    pub initial_probe_loss: f64,
    pub final_probe_loss: f64,
    pub loss_ratio: f64,
    pub decoder_hash_before: String,
    pub decoder_hash_after: String,
    pub predictor_hash_before: String,
    pub predictor_hash_after: String,
    pub perceptual_term: String,
    pub checkpoint: PathBuf,
    pub losses_csv: PathBuf,
    pub seconds: f64,
    pub rows: Vec<LossRow>,
}

/// Number of parameters the main stage updates for a model.
pub fn trainable_param_count(model: &RealOsr) -> usize {
    model.store.count_with_prefixes(&TRAINABLE_PREFIXES)
}

fn probe_loss(model: &RealOsr, disc: &PatchDiscriminator, probe: &(Tensor, Tensor, Tensor), w: &LossWeights) -> Result<f64> {
    let pred = model.forward_views(&probe.0, &probe.2)?.detach();
    let terms = total_loss(&pred, &probe.1, &disc.forward(&pred)?.detach(), w)?;
    scalar(&terms.total)
}

/// Trains a model from scratch on `cfg.dataset`, writing `losses.csv` and
/// `checkpoint.safetensors` into `cfg.out_dir`.
pub fn train(cfg: &TrainConfig) -> Result<(RealOsr, TrainReport)> {
    cfg.validate()?;
    let items = load_dataset(&cfg.dataset)?;
    let model = RealOsr::new(cfg.model_config(), DType::F32)?;
    train_model(model, &items, cfg, None)
}

/// Main training stage on an existing model; runs autoencoder pretraining
/// first when `cfg.ae_pretrain_steps > 0`. `bank` may be passed to reuse
/// projected views.
pub fn train_model(
    mut model: RealOsr,
    items: &[DatasetItem],
    cfg: &TrainConfig,
    bank: Option<&ViewBank>,
) -> Result<(RealOsr, TrainReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let owned;
    let bank = match bank {
        Some(b) => b,
        None => {
            owned = build_view_bank(items, &model.config, model.dtype())?;
            &owned
        }
    };
    if bank.is_empty() {
        return Err(validation("dataset is empty"));
    }
    log::info!("perceptual term: {PERCEPTUAL_LABEL}");
    let ae_pretrain_loss = pretrain_autoencoder(&model, bank, cfg.ae_pretrain_steps, cfg.ae_lr, cfg.ae_batch, cfg.seed)?;
    let disc = PatchDiscriminator::new(&mut model.store, cfg.disc_width)?;

    let decoder_hash_before = model.store.hash_prefixes(&[DECODER_PREFIX])?;
    let predictor_hash_before = model.store.hash_prefixes(&[PREDICTOR_PREFIX])?;
    let trainable = model.store.vars_with_prefixes(&TRAINABLE_PREFIXES);
    let trainable_params = trainable.iter().map(|v| v.elem_count()).sum();
    let mut gen_opt = adam(trainable, cfg.lr)?;
    let mut disc_opt = adam(model.store.vars_with_prefixes(&[DISC_PREFIX]), cfg.lr)?;

    let probe_idx: Vec<usize> = (0..cfg.probe_views.min(bank.len())).map(|k| k * bank.len() / cfg.probe_views.min(bank.len())).collect();
    let probe = bank.select(&probe_idx)?;
    let initial_probe_loss = probe_loss(&model, &disc, &probe, &cfg.weights)?;

    fs::create_dir_all(&cfg.out_dir)?;
    let losses_csv = cfg.out_dir.join("losses.csv");
    let mut writer = csv::Writer::from_path(&losses_csv)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let idx = sample_batch(&mut rng, bank.len(), cfg.batch);
        let (x, y, d) = bank.select(&idx)?;
        let pred = model.forward_views(&x, &d)?;
        let terms = total_loss(&pred, &y, &disc.forward(&pred)?, &cfg.weights)?;
        let total = scalar(&terms.total)?;
        gen_opt.backward_step(&terms.total)?;

        let fake = pred.detach();
        let (_, d_loss) = gan_losses(&disc.forward(&y)?, &disc.forward(&fake)?)?;
        disc_opt.backward_step(&d_loss)?;

        let row = LossRow { step, total, rec: terms.rec, perc: terms.perc, gan_g: terms.gan, d_loss: scalar(&d_loss)? };
        writer.serialize(&row)?;
        rows.push(row);
    }
    writer.flush()?;
    let final_probe_loss = probe_loss(&model, &disc, &probe, &cfg.weights)?;

    let decoder_hash_after = model.store.hash_prefixes(&[DECODER_PREFIX])?;
    let predictor_hash_after = model.store.hash_prefixes(&[PREDICTOR_PREFIX])?;
    let checkpoint = cfg.out_dir.join("checkpoint.safetensors");
    model.save(
        &checkpoint,
        &[
            ("train_config", serde_json::to_string(cfg)?),
            ("decoder_hash", decoder_hash_after.clone()),
            ("predictor_hash", predictor_hash_after.clone()),
        ],
    )?;
    let report = TrainReport {
        variant: model.variant(),
        steps: cfg.steps,
        trainable_params,
        ae_pretrain_loss,
        initial_probe_loss,
        final_probe_loss,
        loss_ratio: final_probe_loss / initial_probe_loss,
        decoder_hash_before,
        decoder_hash_after,
        predictor_hash_before,
        predictor_hash_after,
        perceptual_term: PERCEPTUAL_LABEL.to_string(),
        checkpoint,
        losses_csv,
        seconds: start.elapsed().as_secs_f64(),
        rows,
    };
    fs::write(cfg.out_dir.join("train_report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok((model, report))
}

/// Reads a `losses.csv` written by [`train`].
pub fn read_losses(path: &Path) -> Result<Vec<LossRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<LossRow>, _>>()?)
}
