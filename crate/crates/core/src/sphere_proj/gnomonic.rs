use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A direction on the unit sphere, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn from_degrees(lat: f64, lon: f64) -> Self {
        Self::new(lat.to_radians(), lon.to_radians())
    }

    pub fn to_vector(self) -> [f64; 3] {
        let (sp, cp) = self.lat.sin_cos();
        let (sl, cl) = self.lon.sin_cos();
        [cp * cl, cp * sl, sp]
    }

    pub fn from_vector(v: [f64; 3]) -> Self {
        Self::new(v[2].atan2(v[0].hypot(v[1])), v[1].atan2(v[0]))
    }

    /// Great-circle distance in radians.
    pub fn angular_distance(self, other: LatLon) -> f64 {
        let a = self.to_vector();
        let b = other.to_vector();
        let cross = [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ];
        let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
        let cos = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        sin.atan2(cos)
    }
}

/// Wraps a longitude into `(−π, π]`.
pub fn wrap_longitude(lon: f64) -> f64 {
    let w = (lon + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Cosine of the angular distance between `point` and `center`.
#[inline]
pub fn cos_angular_distance(point: LatLon, center: LatLon) -> f64 {
    center.lat.sin() * point.lat.sin() + center.lat.cos() * point.lat.cos() * (point.lon - center.lon).cos()
}

/// Points within this cosine of the horizon are treated as on it; `cos(π/2)`
/// evaluates to about 6e-17 rather than zero.
pub const HORIZON_EPS: f64 = 1e-12;

/// Projects `point` onto the plane tangent to the sphere at `center`.
pub fn gnomonic_forward(point: LatLon, center: LatLon) -> Result<(f64, f64)> {
    let (sp, cp) = point.lat.sin_cos();
    let (s0, c0) = center.lat.sin_cos();
    let (sd, cd) = (point.lon - center.lon).sin_cos();
    let cos_c = s0 * sp + c0 * cp * cd;
    if !(cos_c > HORIZON_EPS) {
        return Err(Error::OutOfHemisphere { lat: point.lat, lon: point.lon, lat0: center.lat, lon0: center.lon });
    }
    let u = cp * sd / cos_c;
    let v = (c0 * sp - s0 * cp * cd) / cos_c;
    Ok((u, v))
}

/// East and north unit vectors of the tangent plane at `center`.
fn tangent_basis(center: LatLon) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let (s0, c0) = center.lat.sin_cos();
    let (sl, cl) = center.lon.sin_cos();
    let c = [c0 * cl, c0 * sl, s0];
    let east = [-sl, cl, 0.0];
    let north = [-s0 * cl, -s0 * sl, c0];
    (c, east, north)
}

/// Inverse gnomonic projection. Total on finite `(u, v)`; the tangent point
/// itself maps back to `center`. Evaluated by lifting `(u, v)` onto the
/// tangent plane in 3-D and normalising, which agrees with the closed form
/// `φ = asin(cos c·sinφ₀ + v·sin c·cosφ₀/ρ)` but stays well conditioned near
/// the poles.
pub fn gnomonic_inverse(u: f64, v: f64, center: LatLon) -> LatLon {
    if u == 0.0 && v == 0.0 {
        return center;
    }
    let (c, e, n) = tangent_basis(center);
    let p = [c[0] + u * e[0] + v * n[0], c[1] + u * e[1] + v * n[1], c[2] + u * e[2] + v * n[2]];
    let ll = LatLon::from_vector(p);
    LatLon::new(ll.lat, wrap_longitude(ll.lon))
}
