//! Latitude-weighted (WS-) and planar PSNR/SSIM on `[0,1]` rasters. All
//! channels are pooled jointly.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::raster::{ensure_same_shape, Raster};

/// Reported in place of +∞ when two images are identical.
pub const PSNR_CAP_DB: f64 = 99.0;

const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

/// Row weights `cos((i + 0.5 − h/2)·π/h)`, the cosine of each row's latitude.
pub fn ws_weights(h: usize) -> Array1<f64> {
    Array1::from_shape_fn(h, |i| ((i as f64 + 0.5 - h as f64 / 2.0) * std::f64::consts::PI / h as f64).cos())
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

fn weighted_mse(a: &Raster, b: &Raster, row_w: &Array1<f64>) -> f64 {
    let (c, h, w) = a.dim();
    let mut num = 0.0;
    for ch in 0..c {
        for i in 0..h {
            let mut row = 0.0;
            for j in 0..w {
                let d = a[[ch, i, j]] - b[[ch, i, j]];
                row += d * d;
            }
            num += row_w[i] * row;
        }
    }
    num / (row_w.sum() * (c * w) as f64)
}

pub fn ws_psnr(reference: &Raster, test: &Raster) -> Result<f64> {
    ensure_same_shape(reference, test)?;
    Ok(psnr_from_mse(weighted_mse(reference, test, &ws_weights(reference.dim().1))))
}

pub fn psnr(reference: &Raster, test: &Raster) -> Result<f64> {
    ensure_same_shape(reference, test)?;
    Ok(psnr_from_mse(weighted_mse(reference, test, &Array1::ones(reference.dim().1))))
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|k| (-((k as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

fn reflect(k: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = k.rem_euclid(period);
    (if m >= n as isize { period - m } else { m }) as usize
}

/// Separable Gaussian filter with mirrored borders ("same" output size).
fn blur(plane: &Array2<f64>, g: &[f64]) -> Array2<f64> {
    let (h, w) = plane.dim();
    let r = (g.len() / 2) as isize;
    let mut tmp = Array2::<f64>::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            tmp[[i, j]] = g
                .iter()
                .enumerate()
                .map(|(k, wt)| wt * plane[[i, reflect(j as isize + k as isize - r, w)]])
                .sum();
        }
    }
    let mut out = Array2::<f64>::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            out[[i, j]] = g
                .iter()
                .enumerate()
                .map(|(k, wt)| wt * tmp[[reflect(i as isize + k as isize - r, h), j]])
                .sum();
        }
    }
    out
}

/// Per-pixel SSIM map (11×11 Gaussian window, σ = 1.5) of one channel pair.
pub fn ssim_map(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let g = gaussian_window();
    let mu_a = blur(a, &g);
    let mu_b = blur(b, &g);
    let aa = blur(&(a * a), &g);
    let bb = blur(&(b * b), &g);
    let ab = blur(&(a * b), &g);
    let mut out = Array2::zeros(a.dim());
    ndarray::Zip::from(&mut out)
        .and(&mu_a)
        .and(&mu_b)
        .and(&aa)
        .and(&bb)
        .and(&ab)
        .for_each(|o, &ma, &mb, &saa, &sbb, &sab| {
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            *o = ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
        });
    out
}

fn weighted_ssim(a: &Raster, b: &Raster, row_w: &Array1<f64>) -> f64 {
    let c = a.dim().0;
    let w = a.dim().2;
    let mut total = 0.0;
    for ch in 0..c {
        let m = ssim_map(&a.index_axis(Axis(0), ch).to_owned(), &b.index_axis(Axis(0), ch).to_owned());
        total += m.outer_iter().zip(row_w.iter()).map(|(row, wt)| wt * row.sum()).sum::<f64>();
    }
    total / (row_w.sum() * (c * w) as f64)
}

pub fn ws_ssim(reference: &Raster, test: &Raster) -> Result<f64> {
    ensure_same_shape(reference, test)?;
    Ok(weighted_ssim(reference, test, &ws_weights(reference.dim().1)))
}

pub fn ssim(reference: &Raster, test: &Raster) -> Result<f64> {
    ensure_same_shape(reference, test)?;
    Ok(weighted_ssim(reference, test, &Array1::ones(reference.dim().1)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub image: String,
    pub ws_psnr: f64,
    pub ws_ssim: f64,
    pub psnr: f64,
    pub ssim: f64,
}

impl ImageMetrics {
    pub fn compute(image: impl Into<String>, reference: &Raster, test: &Raster) -> Result<Self> {
        Ok(Self {
            image: image.into(),
            ws_psnr: ws_psnr(reference, test)?,
            ws_ssim: ws_ssim(reference, test)?,
            psnr: psnr(reference, test)?,
            ssim: ssim(reference, test)?,
        })
    }
}

/// Per-image rows plus their arithmetic means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<ImageMetrics>,
}

/// Column header shared by every metrics CSV. Learned perceptual metrics are
/// not computed; their column is always `unavailable`.
pub const METRIC_COLUMNS: [&str; 6] = ["image", "ws_psnr", "ws_ssim", "psnr", "ssim", "perceptual"];

impl MetricReport {
    pub fn mean(&self) -> ImageMetrics {
        let n = self.rows.len().max(1) as f64;
        let avg = |f: fn(&ImageMetrics) -> f64| self.rows.iter().map(f).sum::<f64>() / n;
        ImageMetrics {
            image: "mean".into(),
            ws_psnr: avg(|r| r.ws_psnr),
            ws_ssim: avg(|r| r.ws_ssim),
            psnr: avg(|r| r.psnr),
            ssim: avg(|r| r.ssim),
        }
    }

    /// CSV text: header, one row per image, then the `mean` summary row.
    pub fn to_csv(&self) -> String {
        let mut s = METRIC_COLUMNS.join(",");
        s.push('\n');
        for r in self.rows.iter().chain(std::iter::once(&self.mean())) {
            s.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},unavailable\n",
                r.image, r.ws_psnr, r.ws_ssim, r.psnr, r.ssim
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn textured(h: usize) -> Raster {
        Array3::from_shape_fn((3, h, 2 * h), |(c, i, j)| {
            0.5 + 0.3 * ((i as f64 * 0.7 + c as f64).sin() * (j as f64 * 0.45).cos())
        })
    }

    #[test]
    fn two_row_weights() {
        let w = ws_weights(2);
        let e = std::f64::consts::FRAC_1_SQRT_2;
        assert!((w[0] - e).abs() < 1e-12 && (w[1] - e).abs() < 1e-12);
    }

    #[test]
    fn weights_symmetric_and_positive() {
        for h in [1, 5, 64, 255] {
            let w = ws_weights(h);
            for i in 0..h {
                assert!(w[i] > 0.0);
                assert!((w[i] - w[h - 1 - i]).abs() < 1e-12);
            }
        }
        let w = ws_weights(1001);
        assert!((w[500] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identical_images_cap() {
        let x = textured(8);
        assert_eq!(ws_psnr(&x, &x).unwrap(), PSNR_CAP_DB);
        assert_eq!(psnr(&x, &x).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn constant_offset_is_twenty_db() {
        let x = textured(16);
        let y = &x + 0.1;
        assert!((ws_psnr(&x, &y).unwrap() - 20.0).abs() < 1e-6);
        assert!((psnr(&x, &y).unwrap() - 20.0).abs() < 1e-6);
    }

    #[test]
    fn polar_error_weighs_less() {
        let x = Array3::from_elem((1, 16, 32), 0.5);
        let mut pole = x.clone();
        let mut eq = x.clone();
        pole.index_axis_mut(Axis(1), 0).fill(0.7);
        eq.index_axis_mut(Axis(1), 8).fill(0.7);
        assert!(ws_psnr(&x, &pole).unwrap() > ws_psnr(&x, &eq).unwrap());
        assert!((psnr(&x, &pole).unwrap() - psnr(&x, &eq).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ssim_identity_and_ordering() {
        let x = textured(24);
        assert!((ws_ssim(&x, &x).unwrap() - 1.0).abs() < 1e-9);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-9);
        let inv = x.mapv(|v| 1.0 - v);
        let noisy = Array3::from_shape_fn(x.dim(), |(c, i, j)| x[[c, i, j]] + 0.01 * (((c + 3 * i + 7 * j) % 5) as f64 - 2.0));
        assert!(ws_ssim(&x, &inv).unwrap() < ws_ssim(&x, &noisy).unwrap());
    }

    #[test]
    fn single_row_ws_ssim_equals_ssim() {
        let x = Array3::from_shape_fn((3, 1, 40), |(c, _, j)| 0.4 + 0.2 * ((j + c) as f64 * 0.3).sin());
        let y = x.mapv(|v| v * 0.9 + 0.03);
        assert!((ws_ssim(&x, &y).unwrap() - ssim(&x, &y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = textured(8);
        let b = textured(4);
        assert!(ws_psnr(&a, &b).is_err());
        assert!(ssim(&a, &b).is_err());
    }

    #[test]
    fn report_mean_and_csv() {
        let r = MetricReport {
            rows: vec![
                ImageMetrics { image: "a".into(), ws_psnr: 20.0, ws_ssim: 0.5, psnr: 21.0, ssim: 0.6 },
                ImageMetrics { image: "b".into(), ws_psnr: 30.0, ws_ssim: 0.7, psnr: 31.0, ssim: 0.8 },
            ],
        };
        let m = r.mean();
        assert!((m.ws_psnr - 25.0).abs() < 1e-12 && (m.ssim - 0.7).abs() < 1e-12);
        let csv = r.to_csv();
        assert!(csv.starts_with("image,ws_psnr,ws_ssim,psnr,ssim,perceptual\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
