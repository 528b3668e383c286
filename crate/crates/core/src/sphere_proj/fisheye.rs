//! Two-hemisphere equidistant fisheye (`r = f·θ`). The front lens looks along
//! longitude 0, the back lens along longitude π; both share the zenith as
//! "up". The image circle has radius `S/2`, so `f = S/π`.

use ndarray::{Array2, Array3};
use rayon::prelude::*;

use super::gnomonic::LatLon;
use crate::error::{validation, Result};
use crate::raster::{erp_latitude, erp_longitude, erp_pixel_of, ErpImage, Raster};
use crate::resample::{sample_bicubic_into, Edges};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hemisphere {
    Front,
    Back,
}

impl Hemisphere {
    /// Forward, right and up axes of the lens.
    fn axes(self) -> ([f64; 3], [f64; 3], [f64; 3]) {
        match self {
            Hemisphere::Front => ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]),
            Hemisphere::Back => ([-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]),
        }
    }

    pub fn containing(dir: LatLon) -> Self {
        if dir.to_vector()[0] >= 0.0 {
            Hemisphere::Front
        } else {
            Hemisphere::Back
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisheyePair {
    pub front: Raster,
    pub back: Raster,
    /// Pixels per radian of off-axis angle.
    pub focal: f64,
}

impl FisheyePair {
    pub fn new(front: Raster, back: Raster) -> Result<Self> {
        let (_, h, w) = front.dim();
        if h != w || front.dim() != back.dim() || h == 0 {
            return Err(validation(format!(
                "fisheye rasters must be square and equal, got {:?} and {:?}",
                front.dim(),
                back.dim()
            )));
        }
        Ok(Self { focal: focal_for_side(h), front, back })
    }

    pub fn side(&self) -> usize {
        self.front.dim().1
    }

    pub fn get(&self, h: Hemisphere) -> &Raster {
        match h {
            Hemisphere::Front => &self.front,
            Hemisphere::Back => &self.back,
        }
    }

    /// Applies `f` to both hemispheres.
    pub fn try_map(&self, mut f: impl FnMut(&Raster) -> Result<Raster>) -> Result<Self> {
        Self::new(f(&self.front)?, f(&self.back)?)
    }

    /// Pixels inside the image circle.
    pub fn valid_mask(&self) -> Array2<bool> {
        disc_mask(self.side())
    }
}

pub fn focal_for_side(side: usize) -> f64 {
    side as f64 / std::f64::consts::PI
}

pub fn disc_mask(side: usize) -> Array2<bool> {
    let half = side as f64 / 2.0;
    Array2::from_shape_fn((side, side), |(i, j)| {
        let x = j as f64 + 0.5 - half;
        let y = half - (i as f64 + 0.5);
        x.hypot(y) <= half
    })
}

/// Direction seen by fisheye pixel `(row, col)`. Pixels outside the image
/// circle map to off-axis angles beyond π/2 and are still well defined.
pub fn fisheye_direction(h: Hemisphere, row: f64, col: f64, side: usize) -> LatLon {
    let half = side as f64 / 2.0;
    let x = col + 0.5 - half;
    let y = half - (row + 0.5);
    let theta = x.hypot(y) / focal_for_side(side);
    let psi = y.atan2(x);
    let (f, r, u) = h.axes();
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    let v: [f64; 3] = std::array::from_fn(|k| ct * f[k] + st * (cp * r[k] + sp * u[k]));
    LatLon::from_vector(v)
}

/// Fractional fisheye pixel `(row, col)` of `dir` in hemisphere `h`.
pub fn fisheye_pixel_of(h: Hemisphere, dir: LatLon, side: usize) -> (f64, f64) {
    let v = dir.to_vector();
    let (f, r, u) = h.axes();
    let dot = |a: [f64; 3]| a[0] * v[0] + a[1] * v[1] + a[2] * v[2];
    let (df, dr, du) = (dot(f), dot(r), dot(u));
    let theta = dr.hypot(du).atan2(df);
    let psi = du.atan2(dr);
    let rad = focal_for_side(side) * theta;
    let half = side as f64 / 2.0;
    (half - rad * psi.sin() - 0.5, half + rad * psi.cos() - 0.5)
}

pub fn erp_to_fisheye(erp: &ErpImage, side: usize) -> Result<FisheyePair> {
    if side == 0 {
        return Err(validation("fisheye side must be ≥ 1"));
    }
    let src = erp.pixels();
    let (c, h, w) = src.dim();
    let render = |hemi: Hemisphere| {
        let mut out = Array3::zeros((c, side, side));
        let mut px = vec![0.0; c];
        for i in 0..side {
            for j in 0..side {
                let d = fisheye_direction(hemi, i as f64, j as f64, side);
                let (row, col) = erp_pixel_of(d.lat, d.lon, h, w);
                sample_bicubic_into(src, row, col, Edges::ERP, &mut px);
                for ch in 0..c {
                    out[[ch, i, j]] = px[ch];
                }
            }
        }
        out
    };
    let (front, back) = rayon::join(|| render(Hemisphere::Front), || render(Hemisphere::Back));
    FisheyePair::new(front, back)
}

pub fn fisheye_to_erp(pair: &FisheyePair, erp_h: usize) -> Result<ErpImage> {
    if erp_h == 0 {
        return Err(validation("ERP height must be ≥ 1"));
    }
    let side = pair.side();
    let c = pair.front.dim().0;
    let w = 2 * erp_h;
    let rows: Vec<Array2<f64>> = (0..erp_h)
        .into_par_iter()
        .map(|i| {
            let mut out = Array2::zeros((c, w));
            let mut px = vec![0.0; c];
            for j in 0..w {
                let d = LatLon::new(erp_latitude(i as f64, erp_h), erp_longitude(j as f64, w));
                let hemi = Hemisphere::containing(d);
                let (row, col) = fisheye_pixel_of(hemi, d, side);
                sample_bicubic_into(pair.get(hemi), row, col, Edges::PLANAR, &mut px);
                for ch in 0..c {
                    out[[ch, j]] = px[ch];
                }
            }
            out
        })
        .collect();
    let mut erp = Array3::zeros((c, erp_h, w));
    for (i, row) in rows.into_iter().enumerate() {
        erp.index_axis_mut(ndarray::Axis(1), i).assign(&row);
    }
    ErpImage::new(erp)
}
