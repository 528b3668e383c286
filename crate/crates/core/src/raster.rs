//! Planar rasters (`C×H×W`, values nominally in `[0,1]`) and PNG I/O.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use ndarray::Array3;

use crate::error::{validation, Error, Result};

/// Channel-major raster, indexed `[c, row, col]`.
pub type Raster = Array3<f64>;

/// Equirectangular panorama. Column `j` sits at longitude
/// `(j + 0.5)/W·2π − π`, row `i` at latitude `π/2 − (i + 0.5)/H·π`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErpImage(Raster);

impl ErpImage {
    pub fn new(pixels: Raster) -> Result<Self> {
        let (_, h, w) = pixels.dim();
        if h == 0 || w != 2 * h {
            return Err(validation(format!("ERP raster must satisfy W == 2H, got {h}×{w}")));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(validation("ERP raster contains non-finite values"));
        }
        Ok(Self(pixels))
    }

    pub fn constant(channels: usize, height: usize, value: f64) -> Self {
        Self(Array3::from_elem((channels, height, 2 * height), value))
    }

    pub fn channels(&self) -> usize {
        self.0.dim().0
    }

    pub fn height(&self) -> usize {
        self.0.dim().1
    }

    pub fn width(&self) -> usize {
        self.0.dim().2
    }

    pub fn pixels(&self) -> &Raster {
        &self.0
    }

    pub fn into_pixels(self) -> Raster {
        self.0
    }

    pub fn clamped(&self) -> Self {
        Self(self.0.mapv(|v| v.clamp(0.0, 1.0)))
    }
}

/// Longitude of ERP column `j` for an image of width `w`.
pub fn erp_longitude(j: f64, w: usize) -> f64 {
    (j + 0.5) / w as f64 * std::f64::consts::TAU - std::f64::consts::PI
}

/// Latitude of ERP row `i` for an image of height `h`.
pub fn erp_latitude(i: f64, h: usize) -> f64 {
    std::f64::consts::FRAC_PI_2 - (i + 0.5) / h as f64 * std::f64::consts::PI
}

/// Fractional ERP pixel coordinates `(row, col)` of a direction.
pub fn erp_pixel_of(lat: f64, lon: f64, h: usize, w: usize) -> (f64, f64) {
    let row = (std::f64::consts::FRAC_PI_2 - lat) / std::f64::consts::PI * h as f64 - 0.5;
    let col = (lon + std::f64::consts::PI) / std::f64::consts::TAU * w as f64 - 0.5;
    (row, col)
}

pub fn ensure_same_shape(a: &Raster, b: &Raster) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(validation(format!("shape mismatch: {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Loads a PNG (or any decodable image) as RGB in `[0,1]`. 16-bit sources keep
/// their precision.
pub fn load_image(path: impl AsRef<Path>) -> Result<Raster> {
    let img = image::open(path.as_ref())?;
    Ok(dynamic_to_raster(&img))
}

pub fn dynamic_to_raster(img: &DynamicImage) -> Raster {
    let sixteen = matches!(
        img,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    );
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Array3::zeros((3, h, w));
    if sixteen {
        let rgb = img.to_rgb16();
        for (x, y, p) in rgb.enumerate_pixels() {
            for c in 0..3 {
                out[[c, y as usize, x as usize]] = f64::from(p[c]) / 65535.0;
            }
        }
    } else {
        let rgb = img.to_rgb8();
        for (x, y, p) in rgb.enumerate_pixels() {
            for c in 0..3 {
                out[[c, y as usize, x as usize]] = f64::from(p[c]) / 255.0;
            }
        }
    }
    out
}

fn quantize(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max).round()
}

/// Converts a 1- or 3-channel raster to an 8-bit image.
pub fn raster_to_dynamic8(raster: &Raster) -> Result<DynamicImage> {
    let (c, h, w) = raster.dim();
    match c {
        3 => Ok(DynamicImage::ImageRgb8(ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
            Rgb(std::array::from_fn(|k| quantize(raster[[k, y as usize, x as usize]], 255.0) as u8))
        }))),
        1 => Ok(DynamicImage::ImageLuma8(ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
            Luma([quantize(raster[[0, y as usize, x as usize]], 255.0) as u8])
        }))),
        _ => Err(validation(format!("cannot encode a {c}-channel raster"))),
    }
}

pub fn save_png(raster: &Raster, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let (c, h, w) = raster.dim();
    let img = match (depth, c) {
        (BitDepth::Eight, _) => raster_to_dynamic8(raster)?,
        (BitDepth::Sixteen, 3) => {
            DynamicImage::ImageRgb16(ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
                Rgb(std::array::from_fn(|k| {
                    quantize(raster[[k, y as usize, x as usize]], 65535.0) as u16
                }))
            }))
        }
        (BitDepth::Sixteen, 1) => {
            DynamicImage::ImageLuma16(ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
                Luma([quantize(raster[[0, y as usize, x as usize]], 65535.0) as u16])
            }))
        }
        _ => return Err(validation(format!("cannot encode a {c}-channel raster"))),
    };
    img.save_with_format(path.as_ref(), image::ImageFormat::Png).map_err(Error::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erp_rejects_bad_aspect() {
        assert!(ErpImage::new(Array3::zeros((3, 4, 4))).is_err());
        assert!(ErpImage::new(Array3::zeros((3, 4, 8))).is_ok());
    }

    #[test]
    fn pixel_coordinates_invert() {
        let (h, w) = (16, 32);
        for (i, j) in [(0.0, 0.0), (7.0, 13.0), (15.0, 31.0)] {
            let (r, c) = erp_pixel_of(erp_latitude(i, h), erp_longitude(j, w), h, w);
            assert!((r - i).abs() < 1e-12 && (c - j).abs() < 1e-12);
        }
    }

    #[test]
    fn png_sixteen_bit_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let r = Array3::from_shape_fn((3, 5, 10), |(c, i, j)| (c * 50 + i * 10 + j) as f64 / 200.0);
        save_png(&r, &path, BitDepth::Sixteen).unwrap();
        let back = load_image(&path).unwrap();
        let err = (&back - &r).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        assert!(err <= 0.5 / 65535.0 + 1e-12);
    }
}
