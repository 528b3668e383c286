mod common;

use candle_core::{DType, Device, Tensor};
use common::rand_tensor;
use omnisr::degrade::DegradationParams;
use omnisr::synthetic::panorama;
use omnisr_model::autoencoder::AeMode;
use omnisr_model::denoiser::{CounterSnapshot, ModelConfig};
use omnisr_model::tensor::max_abs_diff;
use omnisr_model::unet::NUM_BLOCKS;
use omnisr_model::{realosr_pipeline, AblationVariant, DSource, ExecMode, RealOsr};

fn small(variant: AblationVariant, ae: AeMode) -> ModelConfig {
    ModelConfig { variant, ae_mode: ae, view_size: 32, base_width: 8, ..ModelConfig::default() }
}

fn d1(dn: f64, db: f64) -> Tensor {
    Tensor::from_vec(vec![dn, db], (1, 2), &Device::Cpu).unwrap()
}

#[test]
fn identity_autoencoder_is_exact() {
    let m = RealOsr::new(small(AblationVariant::Full, AeMode::Identity), DType::F64).unwrap();
    let x = rand_tensor(&[2, 3, 32, 32], 0.0, 1.0, 0);
    let d = Tensor::from_vec(vec![0.1, 0.2, 0.3, 0.4], (2, 2), &Device::Cpu).unwrap();
    let z = m.encode(&x, &d).unwrap();
    assert_eq!(max_abs_diff(&m.decode(&z).unwrap(), &x).unwrap(), 0.0);
}

#[test]
fn learned_autoencoder_shapes_and_inert_lora() {
    let m = RealOsr::new(small(AblationVariant::Full, AeMode::Learned), DType::F64).unwrap();
    let x = rand_tensor(&[1, 3, 32, 32], 0.0, 1.0, 1);
    let z1 = m.encode(&x, &d1(0.0, 0.0)).unwrap();
    let z2 = m.encode(&x, &d1(0.9, 0.4)).unwrap();
    assert_eq!(z1.dims(), &[1, 4, 8, 8]);
    assert_eq!(max_abs_diff(&z1, &z2).unwrap(), 0.0);
    assert_eq!(m.decode(&z1).unwrap().dims(), x.dims());
    assert!(m.encode(&rand_tensor(&[1, 3, 30, 30], 0.0, 1.0, 1), &d1(0.0, 0.0)).is_err());
    assert!(m.encode(&x, &d1(1.5, 0.0)).is_err());
}

#[test]
fn one_traversal_per_call() {
    let m = RealOsr::new(small(AblationVariant::Full, AeMode::Learned), DType::F32).unwrap();
    let x = rand_tensor(&[1, 3, 32, 32], 0.0, 1.0, 2).to_dtype(DType::F32).unwrap();
    let d = d1(0.5, 0.5).to_dtype(DType::F32).unwrap();
    let z = m.encode(&x, &d).unwrap();
    let out = m.denoise_with_duig(&z, &x, &d).unwrap();
    assert_eq!(out.dims(), z.dims());
    assert_eq!(
        m.counters.snapshot(),
        CounterSnapshot { unet_forwards: 1, block_executions: NUM_BLOCKS, duig_applications: NUM_BLOCKS }
    );
    assert!(m.denoise_with_duig(&z, &rand_tensor(&[1, 3, 16, 16], 0.0, 1.0, 0).to_dtype(DType::F32).unwrap(), &d).is_err());
}

#[test]
fn disabled_guidance_equals_plain_unet() {
    let mut m = RealOsr::new(small(AblationVariant::Full, AeMode::Learned), DType::F64).unwrap();
    m.set_guidance(false);
    let x = rand_tensor(&[1, 3, 32, 32], 0.0, 1.0, 3);
    let d = d1(0.2, 0.8);
    let z = m.encode(&x, &d).unwrap();
    let a = m.denoise_with_duig(&z, &x, &d).unwrap();
    let b = m.denoise_plain(&z, &d).unwrap();
    assert_eq!(max_abs_diff(&a, &b).unwrap(), 0.0);

    let tp = RealOsr::new(small(AblationVariant::TpBaseline, AeMode::Learned), DType::F64).unwrap();
    let z = tp.encode(&x, &d).unwrap();
    assert_eq!(max_abs_diff(&tp.denoise_with_duig(&z, &x, &d).unwrap(), &tp.denoise_plain(&z, &d).unwrap()).unwrap(), 0.0);
}

#[test]
fn lora_modulate_is_deterministic_and_validated() {
    let m = RealOsr::new(small(AblationVariant::Full, AeMode::Learned), DType::F64).unwrap();
    let a = m.lora_modulate(&d1(0.3, 0.6)).unwrap();
    let b = m.lora_modulate(&d1(0.3, 0.6)).unwrap();
    assert_eq!(a.len(), 3 + 2 * NUM_BLOCKS);
    for ((na, ta), (nb, tb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert_eq!(max_abs_diff(ta, tb).unwrap(), 0.0);
    }
    assert!(m.lora_modulate(&d1(0.3, 1.01)).is_err());
}

#[test]
fn pipeline_serial_and_parallel_agree() {
    let m = RealOsr::new(small(AblationVariant::Full, AeMode::Learned), DType::F32).unwrap();
    let lr = panorama(16, 3);
    let d = DSource::Oracle(DegradationParams::new(0.4, 0.6).unwrap());
    let serial = realosr_pipeline(&m, &lr, ExecMode::Serial, d).unwrap();
    let views = m.config.grid().len();
    assert_eq!(
        m.counters.snapshot(),
        CounterSnapshot { unet_forwards: views, block_executions: NUM_BLOCKS * views, duig_applications: NUM_BLOCKS * views }
    );
    m.counters.reset();
    let parallel = realosr_pipeline(&m, &lr, ExecMode::Parallel, d).unwrap();
    assert_eq!(m.counters.snapshot().unet_forwards, views);
    assert_eq!(serial.image, parallel.image);
    assert_eq!((serial.image.height(), serial.image.width()), (64, 128));
    assert!(serial.image.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn pipeline_with_learned_predictor() {
    let m = RealOsr::new(small(AblationVariant::LatentAdd, AeMode::Identity), DType::F32).unwrap();
    let out = realosr_pipeline(&m, &panorama(8, 1), ExecMode::Parallel, DSource::Learned).unwrap();
    assert_eq!(out.view_d.len(), m.config.grid().len());
    assert!(out.view_d.iter().all(|d| d.validate().is_ok()));
}

#[test]
fn checkpoint_round_trip_and_variant_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.safetensors");
    let m = RealOsr::new(small(AblationVariant::PixelUnfold, AeMode::Learned), DType::F32).unwrap();
    m.save(&path, &[]).unwrap();
    let (back, meta) = RealOsr::load(&path).unwrap();
    assert_eq!(meta["variant"], "pixel_unfold");
    assert_eq!(back.config, m.config);
    let all: Vec<&str> = m.store.names().collect();
    assert_eq!(back.store.hash_prefixes(&all).unwrap(), m.store.hash_prefixes(&all).unwrap());

    let lr = panorama(8, 5);
    let d = DSource::Oracle(DegradationParams::new(0.1, 0.9).unwrap());
    let a = realosr_pipeline(&m, &lr, ExecMode::Serial, d).unwrap();
    let b = realosr_pipeline(&back, &lr, ExecMode::Serial, d).unwrap();
    assert_eq!(a.image, b.image);
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(RealOsr::new(ModelConfig { view_size: 48, ..ModelConfig::default() }, DType::F32).is_err());
    assert!(RealOsr::new(ModelConfig { lora_rank: 0, ..ModelConfig::default() }, DType::F32).is_err());
}
