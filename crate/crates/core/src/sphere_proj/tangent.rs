use std::f64::consts::FRAC_PI_2;

use ndarray::{Array2, Array3, Axis};
use rayon::prelude::*;

use super::gnomonic::{gnomonic_inverse, LatLon};
use super::grid::TangentGrid;
use crate::error::{validation, Error, Result};
use crate::raster::{erp_latitude, erp_longitude, erp_pixel_of, ErpImage, Raster};
use crate::resample::{resize_to, sample_bicubic_into, Edges, ResizeMode};

/// `M` tangent patches with their layout. Masked-out pixels never contribute
/// when the set is fused back to ERP.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentViewSet {
    pub views: Vec<Raster>,
    pub grid: TangentGrid,
    pub valid_mask: Vec<Array2<bool>>,
}

impl TangentViewSet {
    pub fn new(views: Vec<Raster>, grid: TangentGrid, valid_mask: Vec<Array2<bool>>) -> Result<Self> {
        if views.len() != grid.len() || valid_mask.len() != grid.len() {
            return Err(validation(format!(
                "view set has {} views and {} masks for a grid of {}",
                views.len(),
                valid_mask.len(),
                grid.len()
            )));
        }
        let n = grid.patch_size;
        for (v, m) in views.iter().zip(&valid_mask) {
            let (_, h, w) = v.dim();
            if h != n || w != n || m.dim() != (n, n) {
                return Err(validation(format!("view of shape {h}×{w} does not match patch size {n}")));
            }
        }
        Ok(Self { views, grid, valid_mask })
    }

    /// Wraps views that are valid everywhere.
    pub fn fully_valid(views: Vec<Raster>, grid: TangentGrid) -> Result<Self> {
        let n = grid.patch_size;
        let masks = vec![Array2::from_elem((n, n), true); views.len()];
        Self::new(views, grid, masks)
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.views.first().map_or(0, |v| v.dim().0)
    }
}

pub fn upsample_erp(erp: &ErpImage, factor: usize) -> Result<Raster> {
    if factor == 0 {
        return Err(validation("pre-upsampling factor must be ≥ 1"));
    }
    resize_to(erp.pixels(), erp.height() * factor, erp.width() * factor, ResizeMode::Bicubic, Edges::ERP)
}

/// Samples one tangent view from an (already pre-upsampled) ERP raster.
pub fn sample_view(erp: &Raster, grid: &TangentGrid, center: LatLon) -> Raster {
    let (c, h, w) = erp.dim();
    let n = grid.patch_size;
    let mut view = Array3::zeros((c, n, n));
    let mut px = vec![0.0; c];
    for i in 0..n {
        for j in 0..n {
            let (u, v) = grid.pixel_to_plane(i as f64, j as f64);
            let p = gnomonic_inverse(u, v, center);
            let (row, col) = erp_pixel_of(p.lat, p.lon, h, w);
            sample_bicubic_into(erp, row, col, Edges::ERP, &mut px);
            for (ch, &val) in px.iter().enumerate() {
                view[[ch, i, j]] = val;
            }
        }
    }
    view
}

/// ERP → tangent views. The ERP is bicubically upsampled by `pre_upsample`
/// before the views are resampled.
pub fn erp_to_tangent(erp: &ErpImage, grid: &TangentGrid, pre_upsample: usize) -> Result<TangentViewSet> {
    grid.check_coverage(erp.height())?;
    let up = upsample_erp(erp, pre_upsample)?;
    let views: Vec<Raster> = grid.centers.par_iter().map(|&c| sample_view(&up, grid, c)).collect();
    TangentViewSet::fully_valid(views, grid.clone())
}

/// Blending weight of a tangent-plane sample at radius `rho` from the view
/// centre: a cosine falloff reaching zero just beyond the patch corner.
pub fn fusion_weight(rho: f64, grid: &TangentGrid) -> f64 {
    let t = grid.half_extent();
    let reach = t * std::f64::consts::SQRT_2 + 2.0 * t / grid.patch_size as f64;
    (FRAC_PI_2 * rho / reach).cos()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Contribution {
    view: u32,
    row: f64,
    col: f64,
    weight: f64,
}

/// Precomputed TP → ERP resampling: for every ERP pixel, the views that see it
/// and their normalised blending weights.
#[derive(Debug, Clone)]
pub struct FusionPlan {
    grid: TangentGrid,
    erp_h: usize,
    pre_upsample: usize,
    offsets: Vec<usize>,
    contributions: Vec<Contribution>,
}

impl FusionPlan {
    pub fn new(grid: &TangentGrid, erp_h: usize, pre_upsample: usize) -> Result<Self> {
        if erp_h == 0 {
            return Err(validation("ERP height must be ≥ 1"));
        }
        if pre_upsample == 0 {
            return Err(validation("pre-upsampling factor must be ≥ 1"));
        }
        let w = 2 * erp_h;
        let p = pre_upsample as f64;
        let per_row: Vec<Vec<Vec<Contribution>>> = (0..erp_h)
            .into_par_iter()
            .map(|i| {
                (0..w)
                    .map(|j| {
                        let dir = LatLon::new(erp_latitude(i as f64, erp_h), erp_longitude(j as f64, w));
                        let mut cs: Vec<Contribution> = (0..grid.len())
                            .filter_map(|m| {
                                let (u, v) = grid.locate(m, dir)?;
                                let (row, col) = grid.plane_to_pixel(u, v);
                                Some(Contribution {
                                    view: m as u32,
                                    row: (row + 0.5) * p - 0.5,
                                    col: (col + 0.5) * p - 0.5,
                                    weight: fusion_weight(u.hypot(v), grid),
                                })
                            })
                            .collect();
                        let total: f64 = cs.iter().map(|c| c.weight).sum();
                        for c in &mut cs {
                            c.weight /= total;
                        }
                        cs
                    })
                    .collect()
            })
            .collect();
        let mut offsets = Vec::with_capacity(erp_h * w + 1);
        let mut contributions = Vec::new();
        offsets.push(0);
        for (i, row) in per_row.into_iter().enumerate() {
            for (j, cs) in row.into_iter().enumerate() {
                if cs.is_empty() {
                    return Err(Error::Coverage(format!("ERP pixel ({i}, {j}) is covered by no tangent view")));
                }
                contributions.extend(cs);
                offsets.push(contributions.len());
            }
        }
        Ok(Self { grid: grid.clone(), erp_h, pre_upsample, offsets, contributions })
    }

    pub fn erp_height(&self) -> usize {
        self.erp_h
    }

    /// Sum of the normalised weights at every ERP pixel.
    pub fn weight_sums(&self) -> Array2<f64> {
        let w = 2 * self.erp_h;
        Array2::from_shape_fn((self.erp_h, w), |(i, j)| {
            let k = i * w + j;
            self.contributions[self.offsets[k]..self.offsets[k + 1]].iter().map(|c| c.weight).sum()
        })
    }

    /// Number of contributing views per ERP pixel.
    pub fn counts(&self) -> Array2<usize> {
        let w = 2 * self.erp_h;
        Array2::from_shape_fn((self.erp_h, w), |(i, j)| {
            let k = i * w + j;
            self.offsets[k + 1] - self.offsets[k]
        })
    }

    pub fn apply(&self, views: &TangentViewSet) -> Result<ErpImage> {
        if views.grid != self.grid {
            return Err(validation("view set grid differs from the fusion plan grid"));
        }
        let n = self.grid.patch_size;
        let up: Vec<Raster> = views
            .views
            .par_iter()
            .map(|v| {
                resize_to(v, n * self.pre_upsample, n * self.pre_upsample, ResizeMode::Bicubic, Edges::PLANAR)
            })
            .collect::<Result<_>>()?;
        let c = views.channels();
        let w = 2 * self.erp_h;
        let p = self.pre_upsample as f64;
        let radius = (2.5 + 2.0 / p).ceil() as usize;
        let usable: Vec<Array2<bool>> = views.valid_mask.iter().map(|m| erode(m, radius)).collect();
        let rows: Vec<Result<Array2<f64>>> = (0..self.erp_h)
            .into_par_iter()
            .map(|i| {
                let mut out = Array2::zeros((c, w));
                let mut px = vec![0.0; c];
                for j in 0..w {
                    let k = i * w + j;
                    let mut total = 0.0;
                    for con in &self.contributions[self.offsets[k]..self.offsets[k + 1]] {
                        let m = con.view as usize;
                        let mr = (((con.row + 0.5) / p - 0.5).round().clamp(0.0, (n - 1) as f64)) as usize;
                        let mc = (((con.col + 0.5) / p - 0.5).round().clamp(0.0, (n - 1) as f64)) as usize;
                        if !usable[m][[mr, mc]] {
                            continue;
                        }
                        sample_bicubic_into(&up[m], con.row, con.col, Edges::PLANAR, &mut px);
                        for ch in 0..c {
                            out[[ch, j]] += con.weight * px[ch];
                        }
                        total += con.weight;
                    }
                    if total <= 0.0 {
                        return Err(Error::Coverage(format!("ERP pixel ({i}, {j}) has no valid tangent sample")));
                    }
                    if (total - 1.0).abs() > 1e-12 {
                        for ch in 0..c {
                            out[[ch, j]] /= total;
                        }
                    }
                }
                Ok(out)
            })
            .collect();
        let mut erp = Array3::zeros((c, self.erp_h, w));
        for (i, row) in rows.into_iter().enumerate() {
            erp.index_axis_mut(Axis(1), i).assign(&row?);
        }
        ErpImage::new(erp)
    }
}

/// A pixel survives if every pixel within Chebyshev distance `radius` is
/// valid, so interpolation support never reaches a masked pixel.
fn erode(mask: &Array2<bool>, radius: usize) -> Array2<bool> {
    if mask.iter().all(|&v| v) {
        return mask.clone();
    }
    let (h, w) = mask.dim();
    Array2::from_shape_fn((h, w), |(i, j)| {
        let (r0, r1) = (i.saturating_sub(radius), (i + radius).min(h - 1));
        let (c0, c1) = (j.saturating_sub(radius), (j + radius).min(w - 1));
        (r0..=r1).all(|r| (c0..=c1).all(|c| mask[[r, c]]))
    })
}

/// Tangent views → ERP of height `erp_h`. Each view is bicubically upsampled
/// by `pre_upsample`, then every ERP pixel blends the views that contain it.
pub fn tangent_to_erp(views: &TangentViewSet, erp_h: usize, pre_upsample: usize) -> Result<ErpImage> {
    FusionPlan::new(&views.grid, erp_h, pre_upsample)?.apply(views)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_round_trip_is_exact() {
        let grid = TangentGrid::default_with_patch(24);
        let erp = ErpImage::constant(3, 16, 0.5);
        let views = erp_to_tangent(&erp, &grid, 2).unwrap();
        assert_eq!(views.len(), 18);
        for v in &views.views {
            assert!(v.iter().all(|x| (x - 0.5).abs() < 1e-6));
        }
        let back = tangent_to_erp(&views, 16, 2).unwrap();
        assert!(back.pixels().iter().all(|x| (x - 0.5).abs() < 1e-6));
    }

    #[test]
    fn weights_are_normalised() {
        let grid = TangentGrid::default_with_patch(16);
        let plan = FusionPlan::new(&grid, 24, 1).unwrap();
        assert!(plan.weight_sums().iter().all(|s| (s - 1.0).abs() < 1e-6));
        assert!(plan.counts().iter().all(|&c| c >= 1));
    }

    #[test]
    fn masked_pixels_do_not_contribute() {
        // duplicate the north-pole view so the masked copy is redundant
        let mut grid = TangentGrid::default_with_patch(32);
        grid.centers.push(grid.centers[0]);
        let erp = ErpImage::constant(1, 24, 0.25);
        for p in [1, 2] {
            let mut views = erp_to_tangent(&erp, &grid, 1).unwrap();
            let last = views.len() - 1;
            for i in 0..32 {
                for j in 0..32 {
                    if i < 3 || j < 3 || i >= 29 || j >= 29 {
                        views.views[last][[0, i, j]] = 100.0;
                        views.valid_mask[last][[i, j]] = false;
                    }
                }
            }
            let back = tangent_to_erp(&views, 24, p).unwrap();
            assert!(back.pixels().iter().all(|x| (x - 0.25).abs() < 1e-9));
        }
    }

    #[test]
    fn fully_masked_region_is_a_coverage_error() {
        let grid = TangentGrid::default_with_patch(16);
        let erp = ErpImage::constant(1, 12, 0.25);
        let mut views = erp_to_tangent(&erp, &grid, 1).unwrap();
        for m in &mut views.valid_mask {
            m.fill(false);
        }
        assert!(matches!(tangent_to_erp(&views, 12, 1), Err(Error::Coverage(_))));
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let grid = TangentGrid::default_with_patch(16);
        let erp = ErpImage::constant(1, 12, 0.25);
        let views = erp_to_tangent(&erp, &grid, 1).unwrap();
        let plan = FusionPlan::new(&TangentGrid::default_with_patch(8), 12, 1).unwrap();
        assert!(plan.apply(&views).is_err());
    }
}
