//! Catmull-Rom bicubic sampling and separable resizing.
//!
//! Pixel centres sit at integer coordinates; a resize from `n_in` to `n_out`
//! samples the source at `(o + 0.5)·n_in/n_out − 0.5` (half-pixel alignment,
//! no antialiasing for the interpolating modes).

use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::raster::Raster;

/// Catmull-Rom cubic convolution parameter.
pub const CUBIC_A: f64 = -0.5;

pub fn cubic_weight(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((CUBIC_A + 2.0) * x - (CUBIC_A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((CUBIC_A * x - 5.0 * CUBIC_A) * x + 8.0 * CUBIC_A) * x - 4.0 * CUBIC_A
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Clamp,
    Wrap,
}

impl Edge {
    #[inline]
    fn index(self, k: i64, n: usize) -> usize {
        let n = n as i64;
        match self {
            Edge::Clamp => k.clamp(0, n - 1) as usize,
            Edge::Wrap => k.rem_euclid(n) as usize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edges {
    pub rows: Edge,
    pub cols: Edge,
}

impl Edges {
    pub const PLANAR: Edges = Edges { rows: Edge::Clamp, cols: Edge::Clamp };
    /// Clamp at the poles, wrap across the longitude seam.
    pub const ERP: Edges = Edges { rows: Edge::Clamp, cols: Edge::Wrap };
}

#[inline]
fn taps(coord: f64, n: usize, edge: Edge) -> ([usize; 4], [f64; 4]) {
    let base = coord.floor();
    let t = coord - base;
    let base = base as i64;
    let mut idx = [0usize; 4];
    let mut w = [0.0; 4];
    for k in 0..4 {
        let off = k as i64 - 1;
        idx[k] = edge.index(base + off, n);
        w[k] = cubic_weight(t - off as f64);
    }
    (idx, w)
}

/// Bicubic sample of every channel at fractional `(row, col)`.
pub fn sample_bicubic_into(img: &Raster, row: f64, col: f64, edges: Edges, out: &mut [f64]) {
    let (c, h, w) = img.dim();
    let (ri, rw) = taps(row, h, edges.rows);
    let (ci, cw) = taps(col, w, edges.cols);
    for (ch, o) in out.iter_mut().enumerate().take(c) {
        let plane = img.index_axis(Axis(0), ch);
        let mut acc = 0.0;
        for a in 0..4 {
            let mut racc = 0.0;
            for b in 0..4 {
                racc += cw[b] * plane[[ri[a], ci[b]]];
            }
            acc += rw[a] * racc;
        }
        *o = acc;
    }
}

pub fn sample_bicubic(img: &Raster, row: f64, col: f64, edges: Edges) -> Vec<f64> {
    let mut out = vec![0.0; img.dim().0];
    sample_bicubic_into(img, row, col, edges, &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeMode {
    Bicubic,
    Bilinear,
    Area,
}

impl std::str::FromStr for ResizeMode {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bicubic" => Ok(Self::Bicubic),
            "bilinear" => Ok(Self::Bilinear),
            "area" => Ok(Self::Area),
            _ => Err(validation(format!("unknown resize mode `{s}`"))),
        }
    }
}

type AxisWeights = Vec<Vec<(usize, f64)>>;

fn axis_weights(n_in: usize, n_out: usize, mode: ResizeMode, edge: Edge) -> AxisWeights {
    let ratio = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let mut taps: Vec<(usize, f64)> = Vec::with_capacity(4);
            let mut push = |k: i64, w: f64| {
                if w == 0.0 {
                    return;
                }
                let i = edge.index(k, n_in);
                match taps.iter_mut().find(|(j, _)| *j == i) {
                    Some(t) => t.1 += w,
                    None => taps.push((i, w)),
                }
            };
            match mode {
                ResizeMode::Bicubic => {
                    let src = (o as f64 + 0.5) * ratio - 0.5;
                    let base = src.floor();
                    for off in -1..=2i64 {
                        push(base as i64 + off, cubic_weight(src - (base + off as f64)));
                    }
                }
                ResizeMode::Bilinear => {
                    let src = (o as f64 + 0.5) * ratio - 0.5;
                    let base = src.floor();
                    let t = src - base;
                    push(base as i64, 1.0 - t);
                    push(base as i64 + 1, t);
                }
                ResizeMode::Area => {
                    let lo = o as f64 * ratio;
                    let hi = (o as f64 + 1.0) * ratio;
                    let mut k = lo.floor() as i64;
                    while (k as f64) < hi {
                        let overlap = (hi.min(k as f64 + 1.0) - lo.max(k as f64)).max(0.0);
                        push(k, overlap / ratio);
                        k += 1;
                    }
                }
            }
            taps
        })
        .collect()
}

/// Separable resize to `out_h × out_w`.
pub fn resize_to(img: &Raster, out_h: usize, out_w: usize, mode: ResizeMode, edges: Edges) -> Result<Raster> {
    let (c, h, w) = img.dim();
    if out_h == 0 || out_w == 0 {
        return Err(validation("resize output dimensions must be ≥ 1"));
    }
    if out_h == h && out_w == w {
        return Ok(img.clone());
    }
    let rw = axis_weights(h, out_h, mode, edges.rows);
    let cw = axis_weights(w, out_w, mode, edges.cols);
    let mut tmp = Array3::<f64>::zeros((c, out_h, w));
    for ch in 0..c {
        for (o, taps) in rw.iter().enumerate() {
            for j in 0..w {
                tmp[[ch, o, j]] = taps.iter().map(|&(i, wt)| wt * img[[ch, i, j]]).sum();
            }
        }
    }
    let mut out = Array3::<f64>::zeros((c, out_h, out_w));
    for ch in 0..c {
        for i in 0..out_h {
            for (o, taps) in cw.iter().enumerate() {
                out[[ch, i, o]] = taps.iter().map(|&(j, wt)| wt * tmp[[ch, i, j]]).sum();
            }
        }
    }
    Ok(out)
}

/// Resize by a scale factor; output dimensions are `round(n·scale)`.
pub fn resize(img: &Raster, scale: f64, mode: ResizeMode) -> Result<Raster> {
    resize_with_edges(img, scale, mode, Edges::PLANAR)
}

pub fn resize_with_edges(img: &Raster, scale: f64, mode: ResizeMode, edges: Edges) -> Result<Raster> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(validation(format!("resize scale must be positive, got {scale}")));
    }
    let (_, h, w) = img.dim();
    let oh = (h as f64 * scale).round() as usize;
    let ow = (w as f64 * scale).round() as usize;
    resize_to(img, oh, ow, mode, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Raster {
        Array3::from_shape_fn((1, h, w), |(_, i, j)| 0.1 * i as f64 + 0.03 * j as f64)
    }

    #[test]
    fn integer_coordinates_hit_nodes() {
        let img = Array3::from_shape_fn((2, 6, 7), |(c, i, j)| ((c * 31 + i * 7 + j * 13) % 17) as f64 / 17.0);
        for i in 0..6 {
            for j in 0..7 {
                let s = sample_bicubic(&img, i as f64, j as f64, Edges::PLANAR);
                assert_eq!(s, vec![img[[0, i, j]], img[[1, i, j]]]);
            }
        }
    }

    #[test]
    fn constant_is_preserved() {
        let img = Array3::from_elem((3, 5, 9), 0.37);
        for &(r, c) in &[(0.3, 0.1), (-2.0, 11.4), (4.99, 3.5)] {
            for v in sample_bicubic(&img, r, c, Edges::ERP) {
                assert!((v - 0.37).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn linear_ramp_half_pixel() {
        let img = ramp(8, 8);
        let v = sample_bicubic(&img, 3.5, 4.5, Edges::PLANAR)[0];
        let mid = 0.5 * (img[[0, 3, 4]] + img[[0, 4, 5]]);
        assert!((v - mid).abs() < 1e-9, "{v} vs {mid}");
    }

    #[test]
    fn wrap_crosses_the_seam() {
        let img = Array3::from_shape_fn((1, 1, 8), |(_, _, j)| if j == 0 { 1.0 } else { 0.0 });
        let left = sample_bicubic(&img, 0.0, -0.5, Edges::ERP)[0];
        let right = sample_bicubic(&img, 0.0, 7.5, Edges::ERP)[0];
        assert!((left - right).abs() < 1e-15 && left > 0.4);
    }

    #[test]
    fn resize_identity_and_constants() {
        let img = ramp(6, 10);
        for mode in [ResizeMode::Bicubic, ResizeMode::Bilinear, ResizeMode::Area] {
            assert_eq!(resize(&img, 1.0, mode).unwrap(), img);
            let c = Array3::from_elem((2, 12, 12), 0.25);
            for s in [0.25, 0.5, 1.5, 3.0] {
                let r = resize(&c, s, mode).unwrap();
                assert!(r.iter().all(|v| (v - 0.25).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn area_downsample_is_block_mean() {
        let img = Array3::from_shape_fn((1, 4, 4), |(_, i, j)| (i * 4 + j) as f64);
        let r = resize(&img, 0.5, ResizeMode::Area).unwrap();
        assert!((r[[0, 0, 0]] - 2.5).abs() < 1e-12);
        assert!((r[[0, 1, 1]] - 12.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_zero_output() {
        assert!(resize(&ramp(2, 2), 0.1, ResizeMode::Bicubic).is_err());
    }
}
