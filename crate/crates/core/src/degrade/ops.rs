//! Individual degradation stages on planar rasters.

use image::codecs::jpeg::JpegEncoder;
use ndarray::{Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::raster::{dynamic_to_raster, raster_to_dynamic8, Raster};

/// Largest kernel radius; a 21×21 support covers 3σ for σ up to 10/3.
pub const MAX_KERNEL_RADIUS: usize = 10;

/// An odd-sized 2-D convolution kernel summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel(Array2<f64>);

impl BlurKernel {
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        let (h, w) = weights.dim();
        if h % 2 == 0 || w % 2 == 0 {
            return Err(validation(format!("kernel must have odd size, got {h}×{w}")));
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(validation("kernel has non-finite entries"));
        }
        let sum: f64 = weights.sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(validation(format!("kernel must sum to 1, sums to {sum}")));
        }
        Ok(Self(weights))
    }

    pub fn delta() -> Self {
        Self(Array2::ones((1, 1)))
    }

    /// Sampled Gaussian with axis standard deviations `(sigma_x, sigma_y)`
    /// rotated by `theta`, normalized to unit sum.
    pub fn gaussian(sigma_x: f64, sigma_y: f64, theta: f64) -> Result<Self> {
        if !(sigma_x > 0.0 && sigma_y > 0.0) {
            return Err(validation(format!("blur sigmas must be positive, got ({sigma_x}, {sigma_y})")));
        }
        let radius = ((3.0 * sigma_x.max(sigma_y)).ceil() as usize).clamp(1, MAX_KERNEL_RADIUS);
        let (c, s) = (theta.cos(), theta.sin());
        // Inverse covariance of R·diag(σx², σy²)·Rᵀ.
        let (ix, iy) = (1.0 / (sigma_x * sigma_x), 1.0 / (sigma_y * sigma_y));
        let a = c * c * ix + s * s * iy;
        let b = c * s * (ix - iy);
        let d = s * s * ix + c * c * iy;
        let n = 2 * radius + 1;
        let r = radius as f64;
        let mut k = Array2::from_shape_fn((n, n), |(i, j)| {
            let (y, x) = (i as f64 - r, j as f64 - r);
            (-0.5 * (a * x * x + 2.0 * b * x * y + d * y * y)).exp()
        });
        let sum = k.sum();
        k /= sum;
        Ok(Self(k))
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.0
    }
}

fn reflect(k: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = k.rem_euclid(period);
    (if m < n as i64 { m } else { period - m }) as usize
}

/// 2-D convolution (correlation with the kernel) using reflect padding.
pub fn apply_blur(img: &Raster, kernel: &BlurKernel) -> Result<Raster> {
    let k = BlurKernel::new(kernel.0.clone())?;
    let (kh, kw) = k.0.dim();
    let (ry, rx) = ((kh / 2) as i64, (kw / 2) as i64);
    let (c, h, w) = img.dim();
    let rows: Vec<f64> = (0..c * h)
        .into_par_iter()
        .flat_map_iter(|ci| {
            let (ch, i) = (ci / h, ci % h);
            let src = img.index_axis(Axis(0), ch);
            let k = &k;
            (0..w).map(move |j| {
                let mut acc = 0.0;
                for a in 0..kh {
                    let si = reflect(i as i64 + a as i64 - ry, h);
                    for b in 0..kw {
                        let sj = reflect(j as i64 + b as i64 - rx, w);
                        acc += k.0[[a, b]] * src[[si, sj]];
                    }
                }
                acc
            })
        })
        .collect();
    let out = Array3::from_shape_vec((c, h, w), rows).expect("c·h·w samples");
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    /// Shot noise; `level` is the standard deviation at intensity 1.
    Poisson,
}

/// Adds seeded noise and clips to [0, 1]. `stream` selects an independent
/// random stream for the same seed.
pub fn add_noise_stream(img: &Raster, kind: NoiseKind, level: f64, seed: u64, stream: u64) -> Result<Raster> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(validation(format!("noise level must be >= 0, got {level}")));
    }
    if level == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let out = match kind {
        NoiseKind::Gaussian => {
            let normal = Normal::new(0.0, level).expect("positive std");
            img.mapv(|v| v + normal.sample(&mut rng))
        }
        NoiseKind::Poisson => {
            let peak = 1.0 / (level * level);
            img.mapv(|v| {
                let lambda = v.max(0.0) * peak;
                if lambda > 0.0 {
                    Poisson::new(lambda).expect("positive rate").sample(&mut rng) / peak
                } else {
                    0.0
                }
            })
        }
    };
    Ok(out.mapv(|v| v.clamp(0.0, 1.0)))
}

pub fn add_noise(img: &Raster, kind: NoiseKind, level: f64, seed: u64) -> Result<Raster> {
    add_noise_stream(img, kind, level, seed, 0)
}

/// Baseline JPEG encode at `quality` followed by decode.
pub fn jpeg_roundtrip(img: &Raster, quality: u8) -> Result<Raster> {
    if !(1..=100).contains(&quality) {
        return Err(validation(format!("jpeg quality must be in [1, 100], got {quality}")));
    }
    let c = img.dim().0;
    let dynimg = raster_to_dynamic8(img)?;
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality).encode_image(&dynimg)?;
    let decoded = image::load_from_memory_with_format(&buf, image::ImageFormat::Jpeg)?;
    let out = dynamic_to_raster(&decoded);
    if c == 1 {
        return Ok(out.index_axis(Axis(0), 0).insert_axis(Axis(0)).to_owned());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-3..7).map(|k| reflect(k, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(reflect(-5, 1), 0);
    }

    #[test]
    fn unnormalized_kernel_rejected() {
        assert!(BlurKernel::new(Array2::ones((3, 3))).is_err());
        assert!(BlurKernel::new(Array2::from_elem((2, 2), 0.25)).is_err());
    }

    #[test]
    fn anisotropic_kernel_is_elongated() {
        let k = BlurKernel::gaussian(2.0, 0.5, 0.0).unwrap();
        let w = k.weights();
        let c = w.dim().0 / 2;
        assert!(w[[c, c + 1]] > w[[c + 1, c]]);
    }
}
