#![allow(dead_code)]

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rand_tensor(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
}

fn values(t: &Tensor) -> Vec<f64> {
    t.to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap()
}

/// Largest relative error between the analytic gradient of `loss` w.r.t.
/// `var` and central differences, over `samples` random entries.
/// Entries where both gradients are below `floor` are compared absolutely.
pub fn fd_max_rel_err(var: &Var, loss: &dyn Fn() -> Tensor, samples: usize, h: f64, seed: u64) -> f64 {
    let l = loss();
    let grads = l.backward().unwrap();
    let analytic = values(grads.get(var).expect("variable takes part in the loss"));
    let base = values(var.as_tensor());
    let shape = var.dims().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eval = |v: &[f64]| -> f64 {
        var.set(&Tensor::from_vec(v.to_vec(), shape.as_slice(), &Device::Cpu).unwrap()).unwrap();
        loss().to_scalar::<f64>().unwrap()
    };
    let floor = 1e-9;
    let mut worst: f64 = 0.0;
    let picks: Vec<usize> = if base.len() <= samples {
        (0..base.len()).collect()
    } else {
        (0..samples).map(|_| rng.random_range(0..base.len())).collect()
    };
    for i in picks {
        let mut v = base.clone();
        v[i] = base[i] + h;
        let up = eval(&v);
        v[i] = base[i] - h;
        let down = eval(&v);
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let scale = a.abs().max(numeric.abs());
        let err = if scale < floor { (a - numeric).abs() } else { (a - numeric).abs() / scale };
        worst = worst.max(err);
    }
    eval(&base);
    worst
}
