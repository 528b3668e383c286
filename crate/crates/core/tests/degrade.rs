use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};
use omnisr::degrade::*;
use omnisr::metrics::{psnr, ws_psnr};
use omnisr::raster::{save_png, BitDepth};
use omnisr::resample::{resize, resize_to, Edges, ResizeMode};
use omnisr::sphere_proj::{erp_to_fisheye, fisheye_to_erp, FisheyePair};
use omnisr::{synthetic, ErpImage};
use proptest::prelude::*;

fn max_abs(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn delta_blur_is_identity() {
    let x = synthetic::texture(20, 24, 1, 2.0);
    assert!(max_abs(&apply_blur(&x, &BlurKernel::delta()).unwrap(), &x) < 1e-9);
}

#[test]
fn blur_preserves_constants() {
    let x = Array3::from_elem((3, 9, 13), 0.42);
    for k in [BlurKernel::gaussian(2.5, 0.7, 0.4).unwrap(), BlurKernel::gaussian(0.3, 0.3, 0.0).unwrap()] {
        assert!(max_abs(&apply_blur(&x, &k).unwrap(), &x) < 1e-12);
    }
}

#[test]
fn gaussian_impulse_ratio() {
    let sigma = 2.0;
    let mut x = Array3::zeros((1, 31, 31));
    x[[0, 15, 15]] = 1.0;
    let y = apply_blur(&x, &BlurKernel::gaussian(sigma, sigma, 0.0).unwrap()).unwrap();
    let ratio = y[[0, 15, 16]] / y[[0, 15, 15]];
    assert!((ratio - (-1.0 / (2.0 * sigma * sigma)).exp()).abs() < 1e-6);
    let diag = y[[0, 16, 16]] / y[[0, 15, 15]];
    assert!((diag - (-2.0 / (2.0 * sigma * sigma)).exp()).abs() < 1e-6);
}

#[test]
fn non_normalized_kernel_is_validation_error() {
    let err = BlurKernel::new(Array2::from_elem((3, 3), 0.2)).unwrap_err();
    assert!(matches!(err, omnisr::Error::Validation(_)));
}

#[test]
fn noise_contracts() {
    let x = Array3::from_elem((3, 256, 256), 0.5);
    assert_eq!(add_noise(&x, NoiseKind::Gaussian, 0.0, 3).unwrap(), x);
    assert_eq!(add_noise(&x, NoiseKind::Poisson, 0.0, 3).unwrap(), x);
    let a = add_noise(&x, NoiseKind::Gaussian, 0.1, 9).unwrap();
    assert_eq!(a, add_noise(&x, NoiseKind::Gaussian, 0.1, 9).unwrap());
    assert_ne!(a, add_noise(&x, NoiseKind::Gaussian, 0.1, 10).unwrap());
    let n = a.len() as f64;
    let mean = a.sum() / n;
    let std = (a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    println!("gaussian σ=0.1 sample std: {std:.5}");
    assert!((0.095..=0.105).contains(&std), "{std}");
    let p = add_noise(&x, NoiseKind::Poisson, 0.1, 9).unwrap();
    assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    let pm = p.sum() / n;
    let pstd = (p.iter().map(|v| (v - pm).powi(2)).sum::<f64>() / n).sqrt();
    // Shot-noise std at intensity 0.5 is level·√0.5.
    assert!((pstd - 0.1 * 0.5f64.sqrt()).abs() < 0.005, "{pstd}");
}

#[test]
fn jpeg_quality_ordering_and_floors() {
    let x = synthetic::panorama(64, 4).into_pixels();
    let q100 = psnr(&x, &jpeg_roundtrip(&x, 100).unwrap()).unwrap();
    let q90 = psnr(&x, &jpeg_roundtrip(&x, 90).unwrap()).unwrap();
    let q30 = psnr(&x, &jpeg_roundtrip(&x, 30).unwrap()).unwrap();
    println!("jpeg PSNR q100 {q100:.2} q90 {q90:.2} q30 {q30:.2}");
    assert!(q100 >= 40.0, "{q100}");
    assert!(q30 < q90);
    // Below quality ~30 the DC quantization step of the standard tables
    // exceeds two code values, so the bound is checked from 30 upwards.
    for level in [13u8, 77, 128, 200] {
        let c = Array3::from_elem((3, 16, 16), f64::from(level) / 255.0);
        for q in [30, 50, 75, 95, 100] {
            assert!(max_abs(&jpeg_roundtrip(&c, q).unwrap(), &c) <= 1.0 / 255.0 + 1e-12, "level {level} q {q}");
        }
    }
    let c = Array3::from_elem((3, 16, 16), 0.3);
    let g = Array3::from_elem((1, 8, 8), 0.6);
    assert_eq!(jpeg_roundtrip(&g, 50).unwrap().dim(), (1, 8, 8));
    assert!(jpeg_roundtrip(&c, 0).is_err());
}

#[test]
fn jpeg_is_deterministic() {
    let x = synthetic::texture(32, 32, 8, 3.0);
    assert_eq!(jpeg_roundtrip(&x, 55).unwrap(), jpeg_roundtrip(&x, 55).unwrap());
}

#[test]
fn resize_contracts() {
    let x = synthetic::texture(32, 48, 2, 2.0);
    for mode in [ResizeMode::Bicubic, ResizeMode::Bilinear, ResizeMode::Area] {
        assert!(max_abs(&resize(&x, 1.0, mode).unwrap(), &x) < 1e-12);
        let c = Array3::from_elem((3, 20, 30), 0.8);
        assert!(max_abs(&resize(&c, 0.5, mode).unwrap(), &Array3::from_elem((3, 10, 15), 0.8)) < 1e-12);
    }
    // Band-limited analytic image.
    let band = Array3::from_shape_fn((3, 64, 64), |(c, i, j)| {
        0.5 + 0.2 * (i as f64 * 0.15 + c as f64).sin() * (j as f64 * 0.1).cos()
    });
    let down = resize(&band, 0.5, ResizeMode::Bicubic).unwrap();
    let up = resize(&down, 2.0, ResizeMode::Bicubic).unwrap();
    let db = psnr(&band, &up).unwrap();
    println!("band-limited down/up ×2: {db:.2} dB");
    assert!(db >= 35.0, "{db}");
    assert!(resize_to(&band, 0, 4, ResizeMode::Bicubic, Edges::PLANAR).is_err());
}

#[test]
fn synthesize_pair_is_deterministic_and_in_range() {
    let hr = synthetic::panorama(64, 1);
    for preset in [Preset::Default, Preset::Severe] {
        let cfg = DegradationConfig::preset(preset);
        let a = synthesize_pair(&hr, &cfg, 17).unwrap();
        let b = synthesize_pair(&hr, &cfg, 17).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.lr.height(), a.lr.width()), (16, 32));
        assert!(a.lr.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        a.params.validate().unwrap();
        assert_eq!(a.params, params_from_log(&a.stage_log, &cfg));
        assert_eq!(replay(&hr, &a.stage_log).unwrap(), a.lr);
    }
}

#[test]
fn skeleton_reduces_to_projection_and_resize() {
    let hr = synthetic::latitude_gradient(3, 64);
    let rec = synthesize_pair(&hr, &DegradationConfig::skeleton(4), 5).unwrap();
    let fish = erp_to_fisheye(&hr, 64).unwrap();
    let shrink = |r: &Array3<f64>| resize_to(r, 16, 16, ResizeMode::Bicubic, Edges::PLANAR).unwrap();
    let pair = FisheyePair::new(shrink(&fish.front), shrink(&fish.back)).unwrap();
    let expected = fisheye_to_erp(&pair, 16).unwrap();
    assert_eq!(rec.lr, expected);
    assert_eq!(rec.params, DegradationParams { d_n: 0.0, d_b: 0.0 });
}

#[test]
fn maximal_sampling_gives_unit_params() {
    let hr = synthetic::panorama(32, 2);
    let cfg = DegradationConfig {
        blur_kinds: vec![BlurKind::Isotropic],
        blur_sigma: Range::new(3.0, 3.0),
        noise_level: Range::new(0.1, 0.1),
        second_order_prob: 0.0,
        ..Default::default()
    };
    let rec = synthesize_pair(&hr, &cfg, 1).unwrap();
    assert_eq!(rec.params, DegradationParams { d_n: 1.0, d_b: 1.0 });
    let cfg2 = DegradationConfig { second_order_prob: 1.0, ..cfg };
    let rec = synthesize_pair(&hr, &cfg2, 1).unwrap();
    assert_eq!(rec.params, DegradationParams { d_n: 1.0, d_b: 1.0 });
}

#[test]
fn oracle_passes_params_through() {
    let hr = synthetic::panorama(32, 3);
    let mut rec = synthesize_pair(&hr, &DegradationConfig::default(), 2).unwrap();
    rec.params = DegradationParams::new(0.3, 0.7).unwrap();
    let d = estimate_degradation(rec.lr.pixels(), EstimateMode::Oracle, Some(&rec), None).unwrap();
    assert_eq!(d, DegradationParams { d_n: 0.3, d_b: 0.7 });
}

#[test]
fn severe_preset_degrades_more() {
    let mut default_db = 0.0;
    let mut severe_db = 0.0;
    for k in 0..4 {
        let hr = synthetic::panorama(64, 100 + k);
        let reference = downsampled_reference(&hr, 4).unwrap();
        let d = synthesize_pair(&hr, &DegradationConfig::preset(Preset::Default), k).unwrap();
        let s = synthesize_pair(&hr, &DegradationConfig::preset(Preset::Severe), k).unwrap();
        default_db += ws_psnr(reference.pixels(), d.lr.pixels()).unwrap();
        severe_db += ws_psnr(reference.pixels(), s.lr.pixels()).unwrap();
    }
    assert!(severe_db < default_db, "{severe_db} vs {default_db}");
}

fn dir_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["hr", "lr", "meta"] {
        let mut names: Vec<_> = fs::read_dir(root.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        for p in names {
            out.push((format!("{sub}/{}", p.file_name().unwrap().to_string_lossy()), fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn dataset_synthesis_is_byte_identical_and_loadable() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    fs::create_dir_all(&input).unwrap();
    for k in 0..3 {
        save_png(synthetic::panorama(32, k).pixels(), input.join(format!("img{k}.png")), BitDepth::Eight).unwrap();
    }
    let cfg = DegradationConfig::default();
    let a = synthesize_dataset(&input, &tmp.path().join("a"), &cfg, 7).unwrap();
    let b = synthesize_dataset(&input, &tmp.path().join("b"), &cfg, 7).unwrap();
    assert_eq!(a, b);
    assert_eq!(dir_bytes(&tmp.path().join("a")), dir_bytes(&tmp.path().join("b")));
    assert_eq!(a.iter().map(|m| m.seed).collect::<Vec<_>>(), vec![7, 8, 9]);
    let items = load_dataset(&tmp.path().join("a")).unwrap();
    assert_eq!(items.len(), 3);
    assert_eq!(items[1].stem, "img1");
    assert_eq!(items[1].record.params, a[1].params);
    assert_eq!(items[1].record.lr.height(), 8);
}

#[test]
fn dataset_rejects_non_panoramas() {
    let tmp = tempfile::tempdir().unwrap();
    save_png(&Array3::from_elem((3, 10, 10), 0.5), tmp.path().join("sq.png"), BitDepth::Eight).unwrap();
    assert!(synthesize_dataset(tmp.path(), &tmp.path().join("out"), &DegradationConfig::default(), 0).is_err());
    let empty = tempfile::tempdir().unwrap();
    assert!(synthesize_dataset(empty.path(), &empty.path().join("o"), &DegradationConfig::default(), 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn pipeline_params_in_unit_square(seed in 0u64..100_000) {
        let hr = ErpImage::constant(3, 16, 0.5);
        for preset in [Preset::Default, Preset::Severe] {
            let rec = synthesize_pair(&hr, &DegradationConfig::preset(preset), seed).unwrap();
            prop_assert!((0.0..=1.0).contains(&rec.params.d_n) && (0.0..=1.0).contains(&rec.params.d_b));
            prop_assert!(rec.lr.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn stages_preserve_unit_range(seed in 0u64..100_000, level in 0.0f64..0.3, q in 5u8..100) {
        let x = synthetic::texture(16, 16, seed, 4.0);
        let n = add_noise(&x, NoiseKind::Gaussian, level, seed).unwrap();
        prop_assert!(n.iter().all(|v| (0.0..=1.0).contains(v)));
        let j = jpeg_roundtrip(&n, q).unwrap();
        prop_assert!(j.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
