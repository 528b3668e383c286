//! Evaluation of checkpoints on pair datasets and the guidance ablation.

use std::fs;
use std::path::{Path, PathBuf};

use omnisr::degrade::{load_dataset, DatasetItem};
use omnisr::metrics::{ImageMetrics, MetricReport, METRIC_COLUMNS};
use omnisr::resample::{resize_to, Edges, ResizeMode};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::{realosr_pipeline, DSource, ExecMode, RealOsr};
use crate::duig::AblationVariant;
use crate::error::{validation, Result};
use crate::params::ParamStore;
use crate::train::{build_view_bank, train_model, TrainConfig, TrainReport, DECODER_PREFIX, ENCODER_PREFIX};

const AE_PREFIXES: [&str; 2] = [ENCODER_PREFIX, DECODER_PREFIX];

/// Degradation source used during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalDSource {
    Oracle,
    Learned,
}

pub fn evaluate_model(model: &RealOsr, items: &[DatasetItem], d: EvalDSource) -> Result<MetricReport> {
    if items.is_empty() {
        return Err(validation("dataset is empty"));
    }
    let rows = items
        .iter()
        .map(|it| {
            let src = match d {
                EvalDSource::Oracle => DSource::Oracle(it.record.params),
                EvalDSource::Learned => DSource::Learned,
            };
            let sr = realosr_pipeline(model, &it.record.lr, ExecMode::Parallel, src)?;
            Ok(ImageMetrics::compute(it.stem.clone(), it.record.hr.pixels(), sr.image.pixels())?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport { rows })
}

/// Metrics of plain bicubic ERP upsampling of every LR image.
pub fn evaluate_bicubic(items: &[DatasetItem]) -> Result<MetricReport> {
    if items.is_empty() {
        return Err(validation("dataset is empty"));
    }
    let rows = items
        .par_iter()
        .map(|it| {
            let (h, w) = (it.record.hr.height(), it.record.hr.width());
            let up = resize_to(it.record.lr.pixels(), h, w, ResizeMode::Bicubic, Edges::ERP)?.mapv(|v| v.clamp(0.0, 1.0));
            Ok(ImageMetrics::compute(it.stem.clone(), it.record.hr.pixels(), &up)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport { rows })
}

pub fn metrics_path(out_dir: &Path, label: &str) -> PathBuf {
    out_dir.join(format!("metrics_{label}.csv"))
}

/// Runs a checkpoint over a dataset and writes `metrics_<variant>.csv`.
/// The checkpoint must have been trained as `variant`.
pub fn evaluate(
    checkpoint: &Path,
    dataset: &Path,
    variant: AblationVariant,
    d: EvalDSource,
    out_dir: &Path,
) -> Result<(MetricReport, PathBuf)> {
    let (model, meta) = RealOsr::load(checkpoint)?;
    let stored = meta.get("variant").map(String::as_str).unwrap_or("");
    if stored != variant.name() {
        return Err(validation(format!("checkpoint was trained as '{stored}', not '{variant}'")));
    }
    let items = load_dataset(dataset)?;
    let report = evaluate_model(&model, &items, d)?;
    fs::create_dir_all(out_dir)?;
    let path = metrics_path(out_dir, variant.name());
    fs::write(&path, report.to_csv())?;
    Ok((report, path))
}

/// One mean row per labelled report, sharing the metrics CSV columns.
pub fn comparison_csv(reports: &[(String, MetricReport)]) -> String {
    let mut s = format!("variant,{}\n", METRIC_COLUMNS[1..].join(","));
    for (label, r) in reports {
        let m = r.mean();
        s.push_str(&format!("{label},{:.6},{:.6},{:.6},{:.6},unavailable\n", m.ws_psnr, m.ws_ssim, m.psnr, m.ssim));
    }
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationEntry {
    pub variant: AblationVariant,
    pub train: TrainReport,
    pub mean: ImageMetrics,
    pub metrics_csv: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub entries: Vec<AblationEntry>,
    pub comparison_csv: PathBuf,
}

/// Trains and evaluates each variant with the same data, seed and
/// schedule; writes `metrics_<variant>.csv` per variant and
/// `comparison.csv` into `out_dir`. The autoencoder is pretrained once and
/// shared, since its pretraining does not depend on the variant.
pub fn ablate(base: &TrainConfig, variants: &[AblationVariant], out_dir: &Path) -> Result<AblationReport> {
    if variants.is_empty() {
        return Err(validation("no variants requested"));
    }
    let items = load_dataset(&base.dataset)?;
    let bank = build_view_bank(&items, &base.model_config(), candle_core::DType::F32)?;
    fs::create_dir_all(out_dir)?;
    let mut entries = Vec::new();
    let mut table = Vec::new();
    let mut shared_ae: Option<(ParamStore, f64)> = None;
    for &v in variants {
        let mut cfg = TrainConfig { variant: v, out_dir: out_dir.join(v.name()), ..base.clone() };
        let model = RealOsr::new(cfg.model_config(), candle_core::DType::F32)?;
        if let Some((ae, _)) = &shared_ae {
            model.store.copy_from(ae, &AE_PREFIXES)?;
            cfg.ae_pretrain_steps = 0;
        }
        let (model, mut train) = train_model(model, &items, &cfg, Some(&bank))?;
        match &shared_ae {
            Some((_, loss)) => train.ae_pretrain_loss = *loss,
            None => {
                shared_ae = Some((model.store.snapshot(&AE_PREFIXES)?, train.ae_pretrain_loss));
            }
        }
        let report = evaluate_model(&model, &items, EvalDSource::Oracle)?;
        let path = metrics_path(out_dir, v.name());
        fs::write(&path, report.to_csv())?;
        log::info!("{v}: ws-psnr {:.3} dB", report.mean().ws_psnr);
        entries.push(AblationEntry { variant: v, train, mean: report.mean(), metrics_csv: path });
        table.push((v.name().to_string(), report));
    }
    let comparison = out_dir.join("comparison.csv");
    fs::write(&comparison, comparison_csv(&table))?;
    Ok(AblationReport { entries, comparison_csv: comparison })
}
