//! Deterministic procedural images standing in for natural photographs:
//! band-limited 1/f waves plus a few soft edges, defined directly on the
//! sphere so panoramas are seamless at the poles and the longitude seam.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::raster::{erp_latitude, erp_longitude, ErpImage, Raster};
use crate::sphere_proj::LatLon;

struct Wave {
    dir: [f64; 3],
    freq: f64,
    phase: f64,
    amp: [f64; 3],
}

struct SoftEdge {
    normal: [f64; 3],
    offset: f64,
    sharpness: f64,
    amp: [f64; 3],
}

/// A random smooth scene over 3-D directions (or planar points with z = 0).
pub struct Scene {
    base: [f64; 3],
    tilt: [f64; 3],
    waves: Vec<Wave>,
    edges: Vec<SoftEdge>,
}

fn unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.map(|x| x / n);
        }
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl Scene {
    /// `max_freq` bounds the angular frequency (radians⁻¹) of the waves;
    /// frequencies are log-uniform with equal amplitude, giving roughly equal
    /// energy per octave as in natural images.
    pub fn random(seed: u64, max_freq: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let max_freq = max_freq.max(4.0);
        let base = std::array::from_fn(|_| rng.random_range(0.35..0.65));
        let tilt = std::array::from_fn(|_| rng.random_range(-0.15..0.15));
        let waves = (0..64)
            .map(|_| {
                let freq = (rng.random_range(2f64.ln()..max_freq.ln())).exp();
                let a = 0.045;
                Wave {
                    dir: unit(&mut rng),
                    freq,
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                    amp: std::array::from_fn(|_| a * rng.random_range(0.3..1.0)),
                }
            })
            .collect();
        let edges = (0..12)
            .map(|_| SoftEdge {
                normal: unit(&mut rng),
                offset: rng.random_range(-0.6..0.6),
                sharpness: rng.random_range(8.0..max_freq.max(9.0)),
                amp: std::array::from_fn(|_| rng.random_range(-0.15..0.15)),
            })
            .collect();
        Self { base, tilt, waves, edges }
    }

    pub fn eval(&self, p: [f64; 3]) -> [f64; 3] {
        let mut out: [f64; 3] = std::array::from_fn(|c| self.base[c] + self.tilt[c] * p[2]);
        for w in &self.waves {
            let s = (w.freq * dot(w.dir, p) + w.phase).sin();
            for c in 0..3 {
                out[c] += w.amp[c] * s;
            }
        }
        for e in &self.edges {
            let s = 1.0 / (1.0 + (-(dot(e.normal, p) - e.offset) * e.sharpness).exp());
            for c in 0..3 {
                out[c] += e.amp[c] * s;
            }
        }
        out.map(|v| v.clamp(0.0, 1.0))
    }
}

/// Procedural RGB panorama of height `h` (width `2h`) with detail up to 3/4 of
/// the equatorial sampling limit.
pub fn panorama(h: usize, seed: u64) -> ErpImage {
    panorama_with_detail(h, seed, 0.75 * h as f64)
}

pub fn panorama_with_detail(h: usize, seed: u64, max_freq: f64) -> ErpImage {
    let scene = Scene::random(seed, max_freq);
    let w = 2 * h;
    let rows: Vec<Vec<[f64; 3]>> = (0..h)
        .into_par_iter()
        .map(|i| {
            (0..w)
                .map(|j| scene.eval(LatLon::new(erp_latitude(i as f64, h), erp_longitude(j as f64, w)).to_vector()))
                .collect()
        })
        .collect();
    let img = Array3::from_shape_fn((3, h, w), |(c, i, j)| rows[i][j][c]);
    ErpImage::new(img).expect("procedural panorama is finite")
}

/// Procedural planar RGB patch; `extent` is the side length in scene units.
pub fn texture(h: usize, w: usize, seed: u64, extent: f64) -> Raster {
    let s = extent / h.max(w) as f64;
    let scene = Scene::random(seed, 0.5 / s);
    Array3::from_shape_fn((3, h, w), |(c, i, j)| {
        let p = [(j as f64 + 0.5) * s - 0.5 * extent, (i as f64 + 0.5) * s - 0.5 * extent, 0.0];
        scene.eval(p)[c]
    })
}

/// Smooth image varying only with latitude.
pub fn latitude_gradient(channels: usize, h: usize) -> ErpImage {
    let img = Array3::from_shape_fn((channels, h, 2 * h), |(c, i, _)| {
        let lat = erp_latitude(i as f64, h);
        0.5 + 0.35 * lat.sin() * if c % 2 == 0 { 1.0 } else { -0.8 }
    });
    ErpImage::new(img).expect("finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = panorama(16, 3);
        let b = panorama(16, 3);
        assert_eq!(a, b);
        assert!(a.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(a, panorama(16, 4));
    }

    #[test]
    fn texture_shape() {
        assert_eq!(texture(8, 12, 1, 2.0).dim(), (3, 8, 12));
    }
}
