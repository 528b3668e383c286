mod common;

use candle_core::{DType, Device, Tensor, Var};
use common::{fd_max_rel_err, rand_tensor};
use omnisr_model::duig::{
    identity_bank, latent_unfold, BankInit, DamBlock, DamInit, DuigBlock, DuigInit, DynamicKernelBank,
};
use omnisr_model::params::ParamStore;
use omnisr_model::tensor::{channel_shuffle, max_abs_diff, pixel_shuffle, pixel_unshuffle};
use omnisr_model::AblationVariant;
use proptest::prelude::*;

fn d_batch(rows: &[[f64; 2]]) -> Tensor {
    let v: Vec<f64> = rows.iter().flatten().copied().collect();
    Tensor::from_vec(v, (rows.len(), 2), &Device::Cpu).unwrap()
}

#[test]
fn identity_banks_collapse_to_f_y() {
    let mut store = ParamStore::new(DType::F64, 1);
    let phi = identity_bank(&mut store, "phi", 6, 4).unwrap();
    let phi_t = identity_bank(&mut store, "phi_t", 6, 4).unwrap();
    let f_x = rand_tensor(&[2, 6, 8, 8], -1.0, 1.0, 2);
    let f_y = rand_tensor(&[2, 6, 8, 8], -1.0, 1.0, 3);
    let d = d_batch(&[[0.2, 0.9], [0.7, 0.1]]);
    let out = latent_unfold(&f_x, &f_y, &phi, &phi_t, &d).unwrap();
    assert!(max_abs_diff(&out, &f_y).unwrap() <= 1e-5);
}

#[test]
fn consistent_measurement_returns_f_x() {
    let mut store = ParamStore::new(DType::F64, 4);
    let phi = DynamicKernelBank::new(&mut store, "phi", 5, 5, 3, BankInit::Random).unwrap();
    let phi_t = DynamicKernelBank::new(&mut store, "phi_t", 5, 5, 3, BankInit::Random).unwrap();
    let f_x = rand_tensor(&[2, 5, 8, 8], -1.0, 1.0, 5);
    let d = d_batch(&[[0.0, 1.0], [0.5, 0.5]]);
    let f_y = phi.forward(&f_x, &d).unwrap();
    let out = latent_unfold(&f_x, &f_y, &phi, &phi_t, &d).unwrap();
    assert!(max_abs_diff(&out, &f_x).unwrap() <= 1e-5);
}

#[test]
fn unfold_rejects_shape_mismatch() {
    let mut store = ParamStore::new(DType::F64, 0);
    let phi = identity_bank(&mut store, "phi", 4, 2).unwrap();
    let f_x = rand_tensor(&[1, 4, 8, 8], 0.0, 1.0, 1);
    let f_y = rand_tensor(&[1, 4, 4, 4], 0.0, 1.0, 1);
    assert!(latent_unfold(&f_x, &f_y, &phi, &phi, &d_batch(&[[0.1, 0.1]])).is_err());
}

#[test]
fn dynamic_conv_matches_per_sample_convolution() {
    let mut store = ParamStore::new(DType::F64, 9);
    let bank = DynamicKernelBank::new(&mut store, "b", 3, 5, 4, BankInit::Random).unwrap();
    let f = rand_tensor(&[3, 3, 7, 9], -1.0, 1.0, 10);
    let d = d_batch(&[[0.1, 0.2], [0.9, 0.4], [0.5, 1.0]]);
    let batched = bank.forward(&f, &d).unwrap();
    let (kern, bias) = bank.assemble(&d).unwrap();
    for i in 0..3 {
        let k = kern.get(i).unwrap();
        let b = bias.get(i).unwrap().reshape((1, 5, 1, 1)).unwrap();
        let single = f.narrow(0, i, 1).unwrap().conv2d(&k, 1, 1, 1, 1).unwrap().broadcast_add(&b).unwrap();
        assert!(max_abs_diff(&single, &batched.narrow(0, i, 1).unwrap()).unwrap() < 1e-12);
    }
}

#[test]
fn calibrated_dam_is_an_exact_round_trip() {
    for (c, feat, view) in [(4, 16, 64), (32, 8, 64), (64, 4, 64), (128, 2, 64), (7, 8, 16)] {
        let mut store = ParamStore::new(DType::F64, 0);
        let dam = DamBlock::new(&mut store, "dam", c, feat, view, DamInit::Calibrated(0.0)).unwrap();
        let f = rand_tensor(&[2, c, feat, feat], -1.0, 1.0, c as u64);
        let back = dam.p2l(&dam.l2p(&f).unwrap()).unwrap();
        assert!(max_abs_diff(&back, &f).unwrap() < 1e-12, "C={c}, h={feat}");
    }
}

#[test]
fn dam_shapes_and_errors() {
    let mut store = ParamStore::new(DType::F64, 0);
    let dam = DamBlock::new(&mut store, "dam", 32, 8, 64, DamInit::Random).unwrap();
    let img = dam.l2p(&rand_tensor(&[1, 32, 8, 8], 0.0, 1.0, 0)).unwrap();
    assert_eq!(img.dims(), &[1, 3, 64, 64]);
    assert_eq!(dam.p2l(&img).unwrap().dims(), &[1, 32, 8, 8]);
    assert!(dam.l2p(&rand_tensor(&[1, 16, 8, 8], 0.0, 1.0, 0)).is_err());
    assert!(dam.p2l(&rand_tensor(&[1, 3, 32, 32], 0.0, 1.0, 0)).is_err());
    assert!(DamBlock::new(&mut store, "bad", 32, 7, 64, DamInit::Random).is_err());
    assert!(DamBlock::new(&mut store, "toowide", 32, 32, 64, DamInit::Calibrated(0.0)).is_err());
}

#[test]
fn dam_gradients_match_finite_differences() {
    let mut store = ParamStore::new(DType::F64, 11);
    let dam = DamBlock::new(&mut store, "dam", 8, 4, 16, DamInit::Random).unwrap();
    let f = rand_tensor(&[2, 8, 4, 4], -1.0, 1.0, 12);
    let img = rand_tensor(&[2, 3, 16, 16], 0.0, 1.0, 13);
    let r1 = rand_tensor(&[2, 3, 16, 16], -1.0, 1.0, 14);
    let r2 = rand_tensor(&[2, 8, 4, 4], -1.0, 1.0, 15);
    // Smooth scalar probe through both converters.
    let loss = || {
        let a = (dam.l2p(&f).unwrap() * &r1).unwrap().sum_all().unwrap();
        let b = dam.p2l(&img).unwrap().tanh().unwrap();
        (a + (b * &r2).unwrap().sum_all().unwrap()).unwrap()
    };
    for name in ["dam.l2p.weight", "dam.l2p.bias", "dam.p2l.weight", "dam.p2l.bias"] {
        let var = store.get(name).unwrap();
        let err = fd_max_rel_err(var, &loss, 40, 1e-5, 1);
        assert!(err <= 1e-3, "{name}: rel err {err}");
    }
}

#[test]
fn lum_gradients_match_finite_differences() {
    let mut store = ParamStore::new(DType::F64, 21);
    let phi = DynamicKernelBank::new(&mut store, "phi", 4, 4, 3, BankInit::Random).unwrap();
    let phi_t = DynamicKernelBank::new(&mut store, "phi_t", 4, 4, 3, BankInit::Random).unwrap();
    let f_x = rand_tensor(&[2, 4, 6, 6], -1.0, 1.0, 22);
    let f_y = rand_tensor(&[2, 4, 6, 6], -1.0, 1.0, 23);
    let r = rand_tensor(&[2, 4, 6, 6], -1.0, 1.0, 24);
    let d = d_batch(&[[0.3, 0.6], [0.8, 0.05]]);
    let loss = || {
        let out = latent_unfold(&f_x, &f_y, &phi, &phi_t, &d).unwrap();
        (out.tanh().unwrap() * &r).unwrap().sum_all().unwrap()
    };
    for name in [
        "phi.kernels",
        "phi.biases",
        "phi.mlp1.weight",
        "phi.mlp2.weight",
        "phi.mlp2.bias",
        "phi_t.kernels",
        "phi_t.mlp1.bias",
    ] {
        let var = store.get(name).unwrap();
        let err = fd_max_rel_err(var, &loss, 40, 1e-5, 2);
        assert!(err <= 1e-3, "{name}: rel err {err}");
    }
    // Gradient with respect to the input features as well.
    let fx_var = Var::from_tensor(&f_x).unwrap();
    let loss_x = || {
        let out = latent_unfold(fx_var.as_tensor(), &f_y, &phi, &phi_t, &d).unwrap();
        (out.tanh().unwrap() * &r).unwrap().sum_all().unwrap()
    };
    assert!(fd_max_rel_err(&fx_var, &loss_x, 40, 1e-5, 3) <= 1e-3);
}

#[test]
fn duig_block_parameter_sets_per_variant() {
    let names = |v: AblationVariant| {
        let mut store = ParamStore::new(DType::F32, 0);
        DuigBlock::new(&mut store, "duig.b1", v, 16, 8, 32, DuigInit::default()).unwrap();
        store.names().map(str::to_string).collect::<Vec<_>>()
    };
    assert!(names(AblationVariant::TpBaseline).is_empty());
    assert!(names(AblationVariant::LatentAdd).iter().all(|n| n.starts_with("duig.b1.dam.")));
    assert!(names(AblationVariant::Full).iter().any(|n| n.starts_with("duig.b1.phi.")));
    assert!(names(AblationVariant::PixelUnfold).iter().any(|n| n.starts_with("duig.b1.pix_phi_t.")));
}

#[test]
fn default_guidance_starts_near_identity() {
    let mut store = ParamStore::new(DType::F64, 3);
    let init = DuigInit { dam: DamInit::Calibrated(0.0), phi: BankInit::Identity { gain: 1.0, noise: 0.0 }, phi_t: BankInit::Identity { gain: 0.0, noise: 0.0 }, kernels: 4 };
    let f = rand_tensor(&[1, 16, 8, 8], -1.0, 1.0, 4);
    let x = rand_tensor(&[1, 3, 32, 32], 0.0, 1.0, 5);
    let d = d_batch(&[[0.5, 0.5]]);
    for v in AblationVariant::ALL {
        let blk = DuigBlock::new(&mut store, &format!("{v}"), v, 16, 8, 32, init).unwrap();
        let out = blk.apply(&f, &x, &d).unwrap();
        if v == AblationVariant::LatentAdd {
            continue;
        }
        assert!(max_abs_diff(&out, &f).unwrap() < 1e-12, "{v}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mixing_weights_sum_to_one(dn in 0.0f64..=1.0, db in 0.0f64..=1.0, seed in 0u64..1000) {
        let mut store = ParamStore::new(DType::F64, seed);
        let bank = DynamicKernelBank::new(&mut store, "b", 2, 2, 5, BankInit::Random).unwrap();
        let w = bank.mixing_weights(&d_batch(&[[dn, db]])).unwrap();
        let v = w.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        prop_assert!(v.iter().all(|x| *x > 0.0));
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() <= 1e-7);
    }

    #[test]
    fn channel_shuffle_is_a_bijection(g in 1usize..5, per in 1usize..5, seed in 0u64..1000) {
        let c = g * per;
        let x = rand_tensor(&[2, c, 3, 4], -1.0, 1.0, seed);
        let y = channel_shuffle(&x, g).unwrap();
        let back = channel_shuffle(&y, per).unwrap();
        prop_assert_eq!(back.flatten_all().unwrap().to_vec1::<f64>().unwrap(), x.flatten_all().unwrap().to_vec1::<f64>().unwrap());
        let mut a = x.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let mut b = y.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn pixel_shuffle_round_trips(r in 1usize..5, c in 1usize..4, h in 1usize..5, seed in 0u64..1000) {
        let x = rand_tensor(&[1, c * r * r, h, h + 1], -1.0, 1.0, seed);
        let up = pixel_shuffle(&x, r).unwrap();
        prop_assert_eq!(up.dims(), &[1, c, h * r, (h + 1) * r]);
        let back = pixel_unshuffle(&up, r).unwrap();
        prop_assert_eq!(back.flatten_all().unwrap().to_vec1::<f64>().unwrap(), x.flatten_all().unwrap().to_vec1::<f64>().unwrap());
        let img = rand_tensor(&[1, c, h * r, h * r], -1.0, 1.0, seed + 1);
        let again = pixel_shuffle(&pixel_unshuffle(&img, r).unwrap(), r).unwrap();
        prop_assert_eq!(again.flatten_all().unwrap().to_vec1::<f64>().unwrap(), img.flatten_all().unwrap().to_vec1::<f64>().unwrap());
    }
}
