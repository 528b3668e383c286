use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use candle_core::{DType, Device, Tensor};
use clap::Args;
use ndarray::Array3;
use omnisr::degrade::{load_dataset, synthesize_dataset, DegradationConfig, EstimateMode, PairMeta, Preset};
use omnisr::raster::{load_image, save_png, BitDepth};
use omnisr::unfold::{bicubic_operator, Decimation, Identity, LinearOperator};
use omnisr::ErpImage;
use omnisr_model::eval::{ablate, evaluate, evaluate_bicubic, metrics_path, EvalDSource};
use omnisr_model::train::{fit_predictor, read_losses, train_model, PredictorConfig, TrainConfig};
use omnisr_model::{realosr_pipeline, AblationVariant, DSource, ExecMode, RealOsr};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{usage, CliError};
use crate::manifest::RunManifest;
use crate::plot;

type Result<T> = std::result::Result<T, CliError>;

fn to_json(v: &impl Serialize) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory of HR equirectangular PNGs.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    #[arg(long, default_value = "default")]
    pub preset: Preset,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn synth(a: &SynthArgs, root: &Path, m: &mut RunManifest) -> Result<PathBuf> {
    let out = a.out.clone().unwrap_or_else(|| root.join("dataset"));
    let cfg = DegradationConfig { scale: a.scale, ..DegradationConfig::preset(a.preset) };
    let t = Instant::now();
    let metas = synthesize_dataset(&a.input, &out, &cfg, a.seed)?;
    m.timings.insert("synthesis".into(), t.elapsed().as_secs_f64());
    m.config = to_json(&cfg);
    m.seed = Some(a.seed);
    m.inputs.push(a.input.clone());
    m.outputs.push(out.clone());
    println!("synthesized {} pairs into {}", metas.len(), out.display());
    Ok(out)
}

/// Training options shared by `train` and `ablate`. Flags override the
/// values read from `--config`.
#[derive(Debug, Args)]
pub struct TrainOpts {
    /// TOML file with `TrainConfig` keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub view_size: Option<usize>,
    #[arg(long)]
    pub ae_pretrain_steps: Option<usize>,
}

impl TrainOpts {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => toml::from_str(&fs::read_to_string(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
            None => TrainConfig::default(),
        };
        if let Some(v) = &self.dataset {
            cfg.dataset = v.clone();
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.batch {
            cfg.batch = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.view_size {
            cfg.model.view_size = v;
        }
        if let Some(v) = self.ae_pretrain_steps {
            cfg.ae_pretrain_steps = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub opts: TrainOpts,
    #[arg(long)]
    pub variant: Option<AblationVariant>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fit the degradation predictor before the main stage, so the
    /// checkpoint supports `--d learned`.
    #[arg(long)]
    pub fit_predictor: bool,
    #[arg(long, default_value_t = 600)]
    pub predictor_steps: usize,
}

pub fn train(a: &TrainArgs, root: &Path, m: &mut RunManifest) -> Result<PathBuf> {
    let mut cfg = a.opts.resolve()?;
    if let Some(v) = a.variant {
        cfg.variant = v;
    }
    cfg.out_dir = a.out.clone().unwrap_or_else(|| root.join("train").join(cfg.variant.name()));
    let items = load_dataset(&cfg.dataset)?;
    let model = RealOsr::new(cfg.model_config(), DType::F32)?;
    let mut config = to_json(&cfg);
    if a.fit_predictor {
        let pcfg = PredictorConfig { steps: a.predictor_steps, seed: cfg.seed, ..PredictorConfig::default() };
        let t = Instant::now();
        let rep = fit_predictor(&model, &pcfg)?;
        m.timings.insert("predictor".into(), t.elapsed().as_secs_f64());
        println!("predictor MAE: train {:.4}, held-out {:.4}", rep.train_mae, rep.heldout_mae);
        config["predictor"] = to_json(&pcfg);
        config["predictor_report"] = to_json(&rep);
    }
    let (_, rep) = train_model(model, &items, &cfg, None)?;
    m.timings.insert("train".into(), rep.seconds);
    m.config = config;
    m.seed = Some(cfg.seed);
    m.inputs.push(cfg.dataset.clone());
    m.outputs.extend([rep.checkpoint.clone(), rep.losses_csv.clone()]);
    println!(
        "{}: probe loss {:.5} -> {:.5} (ratio {:.3}), {} trainable parameters",
        rep.variant, rep.initial_probe_loss, rep.final_probe_loss, rep.loss_ratio, rep.trainable_params
    );
    Ok(cfg.out_dir)
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// LR equirectangular PNG.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "parallel")]
    pub mode: ExecMode,
    #[arg(long, default_value = "oracle")]
    pub d: EstimateMode,
    /// Metadata record for `--d oracle`; defaults to `../meta/<stem>.jsonl`
    /// relative to the input, as laid out by `synth`.
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

fn default_meta_path(input: &Path) -> Option<PathBuf> {
    let stem = input.file_stem()?.to_string_lossy().into_owned();
    Some(input.parent()?.parent()?.join("meta").join(format!("{stem}.jsonl")))
}

pub fn infer(a: &InferArgs, m: &mut RunManifest) -> Result<PathBuf> {
    let d = match a.d {
        EstimateMode::Learned => DSource::Learned,
        EstimateMode::Oracle => {
            let path = a
                .meta
                .clone()
                .or_else(|| default_meta_path(&a.input))
                .filter(|p| p.is_file())
                .ok_or_else(|| usage("--d oracle needs a metadata record (--meta)"))?;
            let text = fs::read_to_string(&path)?;
            let meta: PairMeta = serde_json::from_str(text.lines().find(|l| !l.trim().is_empty()).unwrap_or(""))?;
            m.inputs.push(path);
            DSource::Oracle(meta.params)
        }
    };
    let (model, _) = RealOsr::load(&a.ckpt)?;
    let lr = ErpImage::new(load_image(&a.input)?)?;
    let out = realosr_pipeline(&model, &lr, a.mode, d)?;
    save_png(out.image.pixels(), &a.out, BitDepth::Sixteen)?;
    for (k, s) in out.view_seconds.iter().enumerate() {
        log::info!("view {k:02}: {s:.4} s");
        m.timings.insert(format!("view_{k:02}"), *s);
    }
    let serial_sum: f64 = out.view_seconds.iter().sum();
    m.timings.insert("views_sum".into(), serial_sum);
    m.timings.insert("total".into(), out.total_seconds);
    m.config = serde_json::json!({
        "mode": format!("{:?}", a.mode).to_lowercase(),
        "d": format!("{:?}", a.d).to_lowercase(),
        "model": model.config,
        "view_d": out.view_d,
    });
    m.inputs.extend([a.ckpt.clone(), a.input.clone()]);
    m.outputs.push(a.out.clone());
    println!(
        "{} views in {:.3} s wall-clock (sum of per-view times {:.3} s), mode {:?}",
        out.view_seconds.len(),
        out.total_seconds,
        serial_sum,
        a.mode
    );
    Ok(a.out.clone())
}

fn eval_source(d: EstimateMode) -> EvalDSource {
    match d {
        EstimateMode::Oracle => EvalDSource::Oracle,
        EstimateMode::Learned => EvalDSource::Learned,
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Variant the checkpoint was trained as; a mismatch is an error.
    #[arg(long)]
    pub variant: AblationVariant,
    #[arg(long, default_value = "oracle")]
    pub d: EstimateMode,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write `metrics_bicubic.csv` for plain bicubic upsampling.
    #[arg(long)]
    pub bicubic: bool,
}

pub fn eval(a: &EvalArgs, root: &Path, m: &mut RunManifest) -> Result<PathBuf> {
    let out = a.out.clone().unwrap_or_else(|| root.join("eval"));
    let t = Instant::now();
    let (report, path) = evaluate(&a.ckpt, &a.dataset, a.variant, eval_source(a.d), &out)?;
    m.timings.insert("evaluate".into(), t.elapsed().as_secs_f64());
    m.outputs.push(path.clone());
    if a.bicubic {
        let bic = evaluate_bicubic(&load_dataset(&a.dataset)?)?;
        let p = metrics_path(&out, "bicubic");
        fs::write(&p, bic.to_csv())?;
        m.outputs.push(p);
    }
    m.config = serde_json::json!({ "variant": a.variant.name(), "d": format!("{:?}", a.d).to_lowercase() });
    m.inputs.extend([a.ckpt.clone(), a.dataset.clone()]);
    let mean = report.mean();
    println!("{}: ws-psnr {:.3} dB, ws-ssim {:.4} -> {}", a.variant, mean.ws_psnr, mean.ws_ssim, path.display());
    Ok(out)
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub opts: TrainOpts,
    /// `all` or a comma-separated list of variant names.
    #[arg(long, default_value = "all")]
    pub variants: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn parse_variants(s: &str) -> Result<Vec<AblationVariant>> {
    if s.trim() == "all" {
        return Ok(AblationVariant::ALL.to_vec());
    }
    let v = s
        .split(',')
        .map(|p| p.trim().parse::<AblationVariant>().map_err(|e| usage(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    if v.is_empty() {
        return Err(usage("no variants given"));
    }
    Ok(v)
}

pub fn ablation(a: &AblateArgs, root: &Path, m: &mut RunManifest) -> Result<PathBuf> {
    let variants = parse_variants(&a.variants)?;
    let cfg = a.opts.resolve()?;
    let out = a.out.clone().unwrap_or_else(|| root.join("ablation"));
    let t = Instant::now();
    let report = ablate(&cfg, &variants, &out)?;
    m.timings.insert("ablate".into(), t.elapsed().as_secs_f64());
    m.config = serde_json::json!({ "train": cfg, "variants": variants });
    m.seed = Some(cfg.seed);
    m.inputs.push(cfg.dataset.clone());
    m.outputs.extend(report.entries.iter().map(|e| e.metrics_csv.clone()));
    m.outputs.push(report.comparison_csv.clone());
    for e in &report.entries {
        println!("{:<13} ws-psnr {:.3} dB  ws-ssim {:.4}", e.variant.name(), e.mean.ws_psnr, e.mean.ws_ssim);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Bicubic,
    Decimation,
    Identity,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long, value_enum, default_value = "bicubic")]
    pub op: OperatorKind,
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    /// Side of the square input.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 100)]
    pub probes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct ProbeReport {
    pub op: OperatorKind,
    pub input_shape: (usize, usize, usize),
    pub output_shape: (usize, usize, usize),
    pub probes: usize,
    /// max |A(ax + by) − aAx − bAy|
    pub linearity_max_abs: f64,
    /// max |A A† A x − A x|
    pub pinv_max_abs: f64,
    /// max relative gap between ⟨Ax, y⟩ and ⟨x, Aᵀy⟩; absent without an exact adjoint.
    pub adjoint_max_rel: Option<f64>,
}

fn max_abs(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn probe_operator(a: &ProbeArgs, root: &Path, m: &mut RunManifest) -> Result<PathBuf> {
    if a.probes == 0 {
        return Err(usage("--probes must be positive"));
    }
    let shape = (3, a.size, a.size);
    let op: Arc<dyn LinearOperator> = match a.op {
        OperatorKind::Bicubic => Arc::new(bicubic_operator(a.scale, shape)?),
        OperatorKind::Decimation => Arc::new(Decimation::new(shape, a.scale)?),
        OperatorKind::Identity => Arc::new(Identity { shape }),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut rand = |s: (usize, usize, usize)| Array3::from_shape_fn(s, |_| rng.random::<f64>());
    let (mut lin, mut pinv, mut adj) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..a.probes {
        let (x, z, y) = (rand(op.input_shape()), rand(op.input_shape()), rand(op.output_shape()));
        let (s, t) = (0.5 + k as f64 / a.probes as f64, -0.75);
        let lhs = op.apply(&(&x * s + &z * t))?;
        let (ax, az) = (op.apply(&x)?, op.apply(&z)?);
        lin = lin.max(max_abs(&lhs, &(&ax * s + &az * t)));
        pinv = pinv.max(max_abs(&op.apply(&op.pinv_apply(&ax)?)?, &ax));
        if op.has_exact_adjoint() {
            let l = (&ax * &y).sum();
            let r = (&x * &op.adjoint_apply(&y)?).sum();
            adj = adj.max((l - r).abs() / l.abs().max(r.abs()).max(1e-300));
        }
    }
    let report = ProbeReport {
        op: a.op,
        input_shape: op.input_shape(),
        output_shape: op.output_shape(),
        probes: a.probes,
        linearity_max_abs: lin,
        pinv_max_abs: pinv,
        adjoint_max_rel: op.has_exact_adjoint().then_some(adj),
    };
    let out = a.out.clone().unwrap_or_else(|| root.join("probe_operator.json"));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&out, serde_json::to_string_pretty(&report)?)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    m.config = to_json(&report);
    m.seed = Some(a.seed);
    m.outputs.push(out.clone());
    Ok(out)
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Points per axis of the d grid over [0, 1]².
    #[arg(long, default_value_t = 5)]
    pub grid: usize,
    /// Leading output/input channels written per kernel.
    #[arg(long, default_value_t = 4)]
    pub channels: usize,
    /// CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const KERNEL_COLUMNS: &str = "block,bank,d_n,d_b,out,in,ky,kx,value";

pub fn dump_kernels(a: &DumpArgs, root: &Path, m: &mut RunManifest) -> Result<PathBuf> {
    if a.grid < 2 || a.channels == 0 {
        return Err(usage("--grid must be at least 2 and --channels positive"));
    }
    let (model, _) = RealOsr::load(&a.ckpt)?;
    let n = a.grid;
    let ds: Vec<(f64, f64)> = (0..n * n).map(|k| ((k / n) as f64 / (n - 1) as f64, (k % n) as f64 / (n - 1) as f64)).collect();
    let flat: Vec<f32> = ds.iter().flat_map(|&(a, b)| [a as f32, b as f32]).collect();
    let d = Tensor::from_vec(flat, (ds.len(), 2), &Device::Cpu).map_err(omnisr_model::Error::from)?;
    let mut csv = String::from(KERNEL_COLUMNS);
    csv.push('\n');
    let mut banks = 0;
    for (b, blk) in model.duig.iter().enumerate() {
        for (name, bank) in [("phi", &blk.phi), ("phi_t", &blk.phi_t)] {
            let Some(bank) = bank else { continue };
            banks += 1;
            let kern = bank.assemble(&d)?.0.to_dtype(DType::F64).map_err(omnisr_model::Error::from)?;
            let (co, ci) = (bank.c_out.min(a.channels), bank.c_in.min(a.channels));
            for (k, &(dn, db)) in ds.iter().enumerate() {
                let kd = kern.get(k).map_err(omnisr_model::Error::from)?;
                let v: Vec<f64> = kd.flatten_all().and_then(|t| t.to_vec1()).map_err(omnisr_model::Error::from)?;
                for o in 0..co {
                    for i in 0..ci {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let val = v[((o * bank.c_in + i) * 3 + ky) * 3 + kx];
                                csv.push_str(&format!("{},{name},{dn},{db},{o},{i},{ky},{kx},{val:.8e}\n", b + 1));
                            }
                        }
                    }
                }
            }
        }
    }
    if banks == 0 {
        return Err(usage(format!("checkpoint variant '{}' has no dynamic kernel banks", model.variant())));
    }
    let out = a.out.clone().unwrap_or_else(|| root.join("kernels.csv"));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&out, csv)?;
    m.config = serde_json::json!({ "grid": n, "channels": a.channels, "variant": model.variant().name() });
    m.inputs.push(a.ckpt.clone());
    m.outputs.push(out.clone());
    println!("wrote {banks} banks × {} d values to {}", ds.len(), out.display());
    Ok(out)
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// `losses.csv` from `train`.
    #[arg(long)]
    pub losses: Option<PathBuf>,
    /// `comparison.csv` from `ablate` or a `metrics_<variant>.csv`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// CSV from `dump-kernels`.
    #[arg(long)]
    pub kernels: Option<PathBuf>,
    /// Block shown in the kernel plot (default: first in the CSV).
    #[arg(long)]
    pub block: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

const METRIC_NAMES: [&str; 4] = ["ws_psnr", "ws_ssim", "psnr", "ssim"];

/// Labels and metric values per row; the `mean` row of a per-image file is
/// skipped.
pub fn read_metric_rows(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| usage(format!("{}: no '{name}' column", path.display())));
    let idx: Vec<usize> = METRIC_NAMES.iter().map(|n| col(n)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let label = rec.get(0).unwrap_or("").to_string();
        if label == "mean" && header.get(0) == Some("image") {
            continue;
        }
        let vals = idx.iter().map(|&i| rec.get(i).and_then(|v| v.parse::<f64>().ok()).unwrap_or(f64::NAN)).collect();
        rows.push((label, vals));
    }
    Ok(rows)
}

#[derive(Debug, serde::Deserialize)]
struct KernelRow {
    block: usize,
    bank: String,
    d_n: f64,
    d_b: f64,
    out: usize,
    #[serde(rename = "in")]
    inp: usize,
    ky: usize,
    kx: usize,
    value: f64,
}

/// One tile per d value on the grid (rows d_n, columns d_b); each tile
/// places the `out × in` 3×3 kernels of the `phi` bank side by side.
/// Returns the tiles, the grid shape and the tile shape.
pub fn kernel_tiles(path: &Path, block: Option<usize>) -> Result<KernelTiles> {
    let mut r = csv::Reader::from_path(path)?;
    let rows: Vec<KernelRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    let block = block.or_else(|| rows.first().map(|r| r.block)).ok_or_else(|| usage(format!("{} is empty", path.display())))?;
    let rows: Vec<&KernelRow> = rows.iter().filter(|r| r.block == block && r.bank == "phi").collect();
    if rows.is_empty() {
        return Err(usage(format!("no phi kernels for block {block} in {}", path.display())));
    }
    let mut dn: Vec<f64> = rows.iter().map(|r| r.d_n).collect();
    let mut db: Vec<f64> = rows.iter().map(|r| r.d_b).collect();
    for v in [&mut dn, &mut db] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    let co = rows.iter().map(|r| r.out).max().unwrap_or(0) + 1;
    let ci = rows.iter().map(|r| r.inp).max().unwrap_or(0) + 1;
    let (th, tw) = (3 * co, 3 * ci);
    let mut tiles = vec![vec![0.0; th * tw]; dn.len() * db.len()];
    for r in rows {
        let i = dn.iter().position(|&v| v == r.d_n).unwrap_or(0);
        let j = db.iter().position(|&v| v == r.d_b).unwrap_or(0);
        tiles[i * db.len() + j][(r.out * 3 + r.ky) * tw + r.inp * 3 + r.kx] = r.value;
    }
    Ok(KernelTiles { tiles, rows: dn.len(), cols: db.len(), tile_h: th, tile_w: tw })
}

pub struct KernelTiles {
    pub tiles: Vec<Vec<f64>>,
    pub rows: usize,
    pub cols: usize,
    pub tile_h: usize,
    pub tile_w: usize,
}

pub fn plot_cmd(a: &PlotArgs, root: &Path, m: &mut RunManifest) -> Result<PathBuf> {
    if a.losses.is_none() && a.metrics.is_none() && a.kernels.is_none() {
        return Err(usage("plot needs at least one of --losses, --metrics, --kernels"));
    }
    let out = a.out.clone().unwrap_or_else(|| root.join("plots"));
    fs::create_dir_all(&out)?;
    let mut legend = serde_json::Map::new();
    if let Some(p) = &a.losses {
        let rows = read_losses(p)?;
        let series: Vec<Vec<f64>> = vec![
            rows.iter().map(|r| r.total).collect(),
            rows.iter().map(|r| r.rec).collect(),
            rows.iter().map(|r| r.perc).collect(),
            rows.iter().map(|r| r.gan_g).collect(),
            rows.iter().map(|r| r.d_loss).collect(),
        ];
        let f = out.join("loss_curves.png");
        plot::line_chart(&series, 800, 400).save(&f)?;
        legend.insert("loss_curves.png".into(), serde_json::json!(["total", "rec", "perc", "gan_g", "d_loss"]));
        m.inputs.push(p.clone());
        m.outputs.push(f);
    }
    if let Some(p) = &a.metrics {
        let rows = read_metric_rows(p)?;
        let values: Vec<Vec<f64>> = rows.iter().map(|r| r.1.clone()).collect();
        let f = out.join("metric_bars.png");
        plot::bar_chart(&values, METRIC_NAMES.len(), 800, 400).save(&f)?;
        legend.insert(
            "metric_bars.png".into(),
            serde_json::json!({ "panels": METRIC_NAMES, "bars": rows.iter().map(|r| r.0.clone()).collect::<Vec<_>>() }),
        );
        m.inputs.push(p.clone());
        m.outputs.push(f);
    }
    if let Some(p) = &a.kernels {
        let k = kernel_tiles(p, a.block)?;
        let f = out.join("kernel_grid.png");
        plot::tile_grid(&k.tiles, k.rows, k.cols, k.tile_h, k.tile_w, 8).save(&f)?;
        legend.insert("kernel_grid.png".into(), serde_json::json!({ "rows": "d_n ascending", "cols": "d_b ascending" }));
        m.inputs.push(p.clone());
        m.outputs.push(f);
    }
    let palette: Vec<String> = plot::PALETTE.iter().map(|c| format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])).collect();
    legend.insert("palette".into(), serde_json::json!(palette));
    m.config = serde_json::Value::Object(legend);
    Ok(out)
}
