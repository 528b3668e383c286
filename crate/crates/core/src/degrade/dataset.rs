//! On-disk pair datasets: `hr/*.png`, `lr/*.png` (16-bit) and one
//! `meta/<stem>.jsonl` record per item.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{synthesize_pair, DegradationConfig, DegradationParams, PairRecord, StageLog};
use crate::error::{validation, Result};
use crate::raster::{load_image, save_png, BitDepth, ErpImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMeta {
    pub stem: String,
    pub seed: u64,
    pub scale: usize,
    pub params: DegradationParams,
    pub stage_log: StageLog,
}

#[derive(Debug, Clone)]
pub struct DatasetItem {
    pub stem: String,
    pub record: PairRecord,
}

/// PNG files in `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    out.sort();
    Ok(out)
}

fn stem_of(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Synthesizes one pair per PNG in `input`; item `k` (in name order) uses
/// seed `base_seed + k`.
pub fn synthesize_dataset(input: &Path, out: &Path, cfg: &DegradationConfig, base_seed: u64) -> Result<Vec<PairMeta>> {
    cfg.validate()?;
    let files = list_images(input)?;
    if files.is_empty() {
        return Err(validation(format!("no PNG images in {}", input.display())));
    }
    for sub in ["hr", "lr", "meta"] {
        fs::create_dir_all(out.join(sub))?;
    }
    files
        .par_iter()
        .enumerate()
        .map(|(k, path)| {
            let stem = stem_of(path);
            let hr = ErpImage::new(load_image(path)?)
                .map_err(|e| validation(format!("{}: {e}", path.display())))?;
            let seed = base_seed.wrapping_add(k as u64);
            let rec = synthesize_pair(&hr, cfg, seed)?;
            save_png(rec.hr.pixels(), out.join("hr").join(format!("{stem}.png")), BitDepth::Sixteen)?;
            save_png(rec.lr.pixels(), out.join("lr").join(format!("{stem}.png")), BitDepth::Sixteen)?;
            let meta = PairMeta { stem: stem.clone(), seed, scale: cfg.scale, params: rec.params, stage_log: rec.stage_log };
            fs::write(out.join("meta").join(format!("{stem}.jsonl")), serde_json::to_string(&meta)? + "\n")?;
            Ok(meta)
        })
        .collect()
}

/// Loads every item that has an HR image, an LR image and a metadata record.
pub fn load_dataset(root: &Path) -> Result<Vec<DatasetItem>> {
    let hr_dir = root.join("hr");
    if !hr_dir.is_dir() {
        return Err(validation(format!("{} is not a dataset (missing hr/)", root.display())));
    }
    list_images(&hr_dir)?
        .into_iter()
        .map(|hr_path| {
            let stem = stem_of(&hr_path);
            let lr = ErpImage::new(load_image(root.join("lr").join(format!("{stem}.png")))?)?;
            let hr = ErpImage::new(load_image(&hr_path)?)?;
            let text = fs::read_to_string(root.join("meta").join(format!("{stem}.jsonl")))?;
            let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
            let meta: PairMeta = serde_json::from_str(line)?;
            meta.params.validate()?;
            if hr.height() != lr.height() * meta.scale {
                return Err(validation(format!(
                    "{stem}: hr height {} is not {}× lr height {}",
                    hr.height(),
                    meta.scale,
                    lr.height()
                )));
            }
            let record = PairRecord { hr, lr, params: meta.params, seed: meta.seed, stage_log: meta.stage_log };
            Ok(DatasetItem { stem, record })
        })
        .collect()
}
