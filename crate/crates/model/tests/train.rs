use std::fs;
use std::path::Path;

use omnisr::degrade::{load_dataset, synthesize_dataset, DegradationConfig};
use omnisr::raster::{save_png, BitDepth};
use omnisr::synthetic::panorama;
use omnisr_model::denoiser::ModelConfig;
use omnisr_model::eval::{comparison_csv, evaluate, evaluate_bicubic, EvalDSource};
use omnisr_model::train::{fit_predictor, read_losses, train, trainable_param_count, PredictorConfig, TrainConfig};
use omnisr_model::{AblationVariant, RealOsr};

fn make_dataset(root: &Path, n: usize, hr_h: usize) {
    let input = root.join("hr_src");
    fs::create_dir_all(&input).unwrap();
    for k in 0..n {
        save_png(panorama(hr_h, 40 + k as u64).pixels(), input.join(format!("p{k}.png")), BitDepth::Sixteen).unwrap();
    }
    synthesize_dataset(&input, &root.join("ds"), &DegradationConfig::default(), 3).unwrap();
}

fn tiny(root: &Path, variant: AblationVariant, out: &str) -> TrainConfig {
    TrainConfig {
        dataset: root.join("ds"),
        out_dir: root.join(out),
        variant,
        steps: 4,
        batch: 2,
        ae_pretrain_steps: 3,
        probe_views: 2,
        disc_width: 4,
        model: ModelConfig { view_size: 32, base_width: 8, ..ModelConfig::default() },
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_deterministic_and_keeps_frozen_modules() {
    let tmp = tempfile::tempdir().unwrap();
    make_dataset(tmp.path(), 2, 32);
    let (_, a) = train(&tiny(tmp.path(), AblationVariant::Full, "a")).unwrap();
    let (_, b) = train(&tiny(tmp.path(), AblationVariant::Full, "b")).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(fs::read(&a.losses_csv).unwrap(), fs::read(&b.losses_csv).unwrap());
    assert_eq!(a.decoder_hash_before, a.decoder_hash_after);
    assert_eq!(a.predictor_hash_before, a.predictor_hash_after);
    let rows = read_losses(&a.losses_csv).unwrap();
    assert_eq!(rows.len(), 4);
    let w = TrainConfig::default().weights;
    for r in &rows {
        assert!((r.total - w.combine(r.rec, r.perc, r.gan_g)).abs() <= 1e-5 * r.total.abs().max(1.0));
    }
    let (model, meta) = RealOsr::load(&a.checkpoint).unwrap();
    assert_eq!(meta["variant"], "full");
    assert_eq!(model.store.hash_prefixes(&["ae.dec."]).unwrap(), a.decoder_hash_after);
}

#[test]
fn baseline_trains_fewer_parameters() {
    let cfg = ModelConfig { view_size: 32, base_width: 8, ..ModelConfig::default() };
    let count = |v| trainable_param_count(&RealOsr::new(ModelConfig { variant: v, ..cfg.clone() }, candle_core::DType::F32).unwrap());
    let tp = count(AblationVariant::TpBaseline);
    for v in [AblationVariant::LatentAdd, AblationVariant::PixelUnfold, AblationVariant::Full] {
        assert!(tp < count(v), "{v}");
    }
}

#[test]
fn variants_differ_only_in_guidance_parameters() {
    let names = |v| {
        let m = RealOsr::new(ModelConfig { variant: v, view_size: 32, base_width: 8, ..ModelConfig::default() }, candle_core::DType::F32).unwrap();
        m.store.names().map(str::to_string).collect::<std::collections::BTreeSet<_>>()
    };
    let tp = names(AblationVariant::TpBaseline);
    let add = names(AblationVariant::LatentAdd);
    let pix = names(AblationVariant::PixelUnfold);
    let full = names(AblationVariant::Full);
    assert!(tp.iter().all(|n| !n.starts_with("duig.")));
    for set in [&add, &pix, &full] {
        assert!(tp.is_subset(set));
    }
    let extra = |s: &std::collections::BTreeSet<String>| s.difference(&tp).cloned().collect::<Vec<_>>();
    assert!(extra(&add).iter().all(|n| n.starts_with("duig.b") && n.contains(".dam.")));
    assert_eq!(extra(&add).len(), 7 * 4);
    let dam: Vec<_> = extra(&add);
    let rest = |s: &std::collections::BTreeSet<String>| extra(s).into_iter().filter(|n| !dam.contains(n)).collect::<Vec<_>>();
    assert!(rest(&full).iter().all(|n| n.contains(".phi.") || n.contains(".phi_t.")));
    assert!(rest(&pix).iter().all(|n| n.contains(".pix_phi.") || n.contains(".pix_phi_t.")));
    assert_eq!(rest(&full).len(), rest(&pix).len());
}

#[test]
fn empty_dataset_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir_all(tmp.path().join("ds/hr")).unwrap();
    assert!(train(&tiny(tmp.path(), AblationVariant::Full, "o")).is_err());
}

#[test]
fn evaluation_is_read_only_and_checks_variant() {
    let tmp = tempfile::tempdir().unwrap();
    make_dataset(tmp.path(), 2, 32);
    let cfg = TrainConfig { steps: 1, ..tiny(tmp.path(), AblationVariant::LatentAdd, "run") };
    let (_, rep) = train(&cfg).unwrap();
    let before = fs::read(&rep.checkpoint).unwrap();
    let out = tmp.path().join("eval");
    let (report, path) = evaluate(&rep.checkpoint, &cfg.dataset, AblationVariant::LatentAdd, EvalDSource::Oracle, &out).unwrap();
    assert_eq!(fs::read(&rep.checkpoint).unwrap(), before);
    assert_eq!(report.rows.len(), 2);
    assert!(path.ends_with("metrics_latent_add.csv"));
    assert!(report.rows.iter().all(|r| r.ws_psnr.is_finite()));
    assert!(evaluate(&rep.checkpoint, &cfg.dataset, AblationVariant::Full, EvalDSource::Oracle, &out).is_err());

    let items = load_dataset(&cfg.dataset).unwrap();
    let bicubic = evaluate_bicubic(&items).unwrap();
    assert!(bicubic.mean().ws_psnr.is_finite());
    let table = comparison_csv(&[("bicubic".into(), bicubic), ("latent_add".into(), report)]);
    let lines: Vec<_> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| l.split(',').count() == 6));
}

#[test]
fn predictor_fit_only_touches_predictor() {
    let m = RealOsr::new(ModelConfig { view_size: 32, base_width: 8, ..ModelConfig::default() }, candle_core::DType::F32).unwrap();
    let others: Vec<String> = m.store.names().filter(|n| !n.starts_with("predictor.")).map(str::to_string).collect();
    let refs: Vec<&str> = others.iter().map(String::as_str).collect();
    let before = m.store.hash_prefixes(&refs).unwrap();
    let rep = fit_predictor(&m, &PredictorConfig { samples: 16, heldout: 8, steps: 3, batch: 4, ..PredictorConfig::default() }).unwrap();
    assert!(rep.train_mae.is_finite() && rep.heldout_mae.is_finite());
    assert_eq!(m.store.hash_prefixes(&refs).unwrap(), before);
}
