use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::gnomonic::{cos_angular_distance, gnomonic_forward, LatLon};
use crate::error::{Error, Result};
use crate::raster::{erp_latitude, erp_longitude};

/// Layout of the tangent views: `M` centres sharing a square field of view
/// `fov` (full angle across the patch) sampled on `patch_size × patch_size`
/// pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentGrid {
    pub centers: Vec<LatLon>,
    pub fov: f64,
    pub patch_size: usize,
}

pub const DEFAULT_FOV_DEG: f64 = 80.0;
pub const DEFAULT_PATCH: usize = 128;
/// Latitude of the two equatorial rings of the default layout.
pub const DEFAULT_RING_LAT_DEG: f64 = 25.0;

impl TangentGrid {
    pub fn new(centers: Vec<LatLon>, fov: f64, patch_size: usize) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Config("tangent grid needs at least one centre".into()));
        }
        if !(fov > 0.0 && fov < std::f64::consts::PI) {
            return Err(Error::Config(format!("fov must lie in (0, π), got {fov}")));
        }
        if patch_size == 0 {
            return Err(Error::Config("patch size must be ≥ 1".into()));
        }
        if centers.iter().any(|c| !(c.lat.is_finite() && c.lon.is_finite())) {
            return Err(Error::Config("non-finite tangent centre".into()));
        }
        Ok(Self { centers, fov, patch_size })
    }

    /// Eighteen views: both poles plus two rings of eight at ±25° latitude,
    /// the southern ring rotated by half a step.
    pub fn default_with_patch(patch_size: usize) -> Self {
        let mut centers = vec![LatLon::from_degrees(90.0, 0.0), LatLon::from_degrees(-90.0, 0.0)];
        for k in 0..8 {
            centers.push(LatLon::from_degrees(DEFAULT_RING_LAT_DEG, -180.0 + 45.0 * k as f64));
        }
        for k in 0..8 {
            centers.push(LatLon::from_degrees(-DEFAULT_RING_LAT_DEG, -157.5 + 45.0 * k as f64));
        }
        Self { centers, fov: DEFAULT_FOV_DEG.to_radians(), patch_size }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Half extent of the patch on the tangent plane, `tan(fov/2)`.
    pub fn half_extent(&self) -> f64 {
        (self.fov / 2.0).tan()
    }

    /// Tangent-plane coordinates of the centre of patch pixel `(row, col)`.
    pub fn pixel_to_plane(&self, row: f64, col: f64) -> (f64, f64) {
        let t = self.half_extent();
        let n = self.patch_size as f64;
        (((col + 0.5) / n * 2.0 - 1.0) * t, (1.0 - (row + 0.5) / n * 2.0) * t)
    }

    /// Fractional patch pixel `(row, col)` of tangent-plane point `(u, v)`.
    pub fn plane_to_pixel(&self, u: f64, v: f64) -> (f64, f64) {
        let t = self.half_extent();
        let n = self.patch_size as f64;
        ((1.0 - v / t) / 2.0 * n - 0.5, (u / t + 1.0) / 2.0 * n - 0.5)
    }

    /// Tangent coordinates of `p` in view `m`, if `p` falls inside the patch.
    pub fn locate(&self, m: usize, p: LatLon) -> Option<(f64, f64)> {
        let center = self.centers[m];
        if cos_angular_distance(p, center) <= 0.0 {
            return None;
        }
        let (u, v) = gnomonic_forward(p, center).ok()?;
        let t = self.half_extent();
        (u.abs() <= t && v.abs() <= t).then_some((u, v))
    }

    /// Number of views whose patch contains each ERP pixel centre.
    pub fn coverage_counts(&self, erp_h: usize) -> Array2<u32> {
        let w = 2 * erp_h;
        Array2::from_shape_fn((erp_h, w), |(i, j)| {
            let p = LatLon::new(erp_latitude(i as f64, erp_h), erp_longitude(j as f64, w));
            (0..self.len()).filter(|&m| self.locate(m, p).is_some()).count() as u32
        })
    }

    pub fn check_coverage(&self, erp_h: usize) -> Result<()> {
        let counts = self.coverage_counts(erp_h);
        let holes = counts.iter().filter(|&&c| c == 0).count();
        if holes > 0 {
            return Err(Error::Config(format!(
                "tangent grid leaves {holes} ERP pixels uncovered at height {erp_h}"
            )));
        }
        Ok(())
    }

    /// Plain-text form: `fov <deg>`, `patch <N>`, then one `center <lat°> <lon°>`
    /// line per view. `#` starts a comment.
    pub fn to_config_string(&self) -> String {
        let mut s = String::from("# tangent grid: angles in degrees\n");
        let _ = writeln!(s, "fov {}", self.fov.to_degrees());
        let _ = writeln!(s, "patch {}", self.patch_size);
        for c in &self.centers {
            let _ = writeln!(s, "center {} {}", c.lat.to_degrees(), c.lon.to_degrees());
        }
        s
    }

    pub fn parse_config(text: &str) -> Result<Self> {
        let mut fov = None;
        let mut patch = None;
        let mut centers = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Config(format!("grid config line {}: cannot parse `{raw}`", lineno + 1));
            let mut parts = line.split_whitespace();
            let key = parts.next().ok_or_else(bad)?;
            let nums: Vec<f64> = parts.map(|p| p.parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?;
            match (key, nums.as_slice()) {
                ("fov", [deg]) => fov = Some(deg.to_radians()),
                ("patch", [n]) if *n >= 1.0 && n.fract() == 0.0 => patch = Some(*n as usize),
                ("center", [lat, lon]) => centers.push(LatLon::from_degrees(*lat, *lon)),
                _ => return Err(bad()),
            }
        }
        let fov = fov.ok_or_else(|| Error::Config("grid config is missing `fov`".into()))?;
        let patch = patch.ok_or_else(|| Error::Config("grid config is missing `patch`".into()))?;
        Self::new(centers, fov, patch)
    }
}
