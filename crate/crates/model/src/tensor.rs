//! Raster/tensor conversion and channel/pixel rearrangements.

use candle_core::{DType, Device, Tensor};
use ndarray::Array3;
use omnisr::Raster;

use crate::error::{validation, Result};

/// `(C, H, W)` raster to a `(1, C, H, W)` tensor.
pub fn raster_to_tensor(r: &Raster, dtype: DType) -> Result<Tensor> {
    let (c, h, w) = r.dim();
    let data: Vec<f64> = r.iter().copied().collect();
    Ok(Tensor::from_vec(data, (1, c, h, w), &Device::Cpu)?.to_dtype(dtype)?)
}

pub fn rasters_to_batch(rs: &[&Raster], dtype: DType) -> Result<Tensor> {
    let ts = rs.iter().map(|r| raster_to_tensor(r, dtype)).collect::<Result<Vec<_>>>()?;
    Ok(Tensor::cat(&ts, 0)?)
}

/// A `(1, C, H, W)` or `(C, H, W)` tensor back to a raster.
pub fn tensor_to_raster(t: &Tensor) -> Result<Raster> {
    let t = if t.rank() == 4 {
        if t.dim(0)? != 1 {
            return Err(validation(format!("expected batch of one, got {:?}", t.dims())));
        }
        t.squeeze(0)?
    } else {
        t.clone()
    };
    let (c, h, w) = t.dims3()?;
    let v = t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    Ok(Array3::from_shape_vec((c, h, w), v).expect("c·h·w elements"))
}

/// Splits `C` channels into `g` groups and interleaves them:
/// reshape `(g, C/g)` → transpose → flatten.
pub fn channel_shuffle(f: &Tensor, groups: usize) -> Result<Tensor> {
    let (b, c, h, w) = f.dims4()?;
    if groups == 0 || c % groups != 0 {
        return Err(validation(format!("{c} channels are not divisible into {groups} groups")));
    }
    Ok(f.reshape((b, groups, c / groups, h, w))?.transpose(1, 2)?.contiguous()?.reshape((b, c, h, w))?)
}

/// Depth-to-space: `(B, C·r², H, W)` → `(B, C, H·r, W·r)`.
pub fn pixel_shuffle(f: &Tensor, r: usize) -> Result<Tensor> {
    let (_, c, _, _) = f.dims4()?;
    if r == 0 || c % (r * r) != 0 {
        return Err(validation(format!("{c} channels are not divisible by r² = {}", r * r)));
    }
    Ok(candle_nn::ops::pixel_shuffle(f, r)?)
}

/// Space-to-depth: `(B, C, H·r, W·r)` → `(B, C·r², H, W)`.
pub fn pixel_unshuffle(f: &Tensor, r: usize) -> Result<Tensor> {
    let (_, _, h, w) = f.dims4()?;
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(validation(format!("spatial size {h}×{w} is not divisible by {r}")));
    }
    Ok(candle_nn::ops::pixel_unshuffle(f, r)?)
}

pub fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Largest absolute elementwise difference.
pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> Result<f64> {
    Ok((a - b)?.abs()?.flatten_all()?.max(0)?.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffle_is_the_documented_permutation() {
        let f = Tensor::arange(0f32, 6.0, &Device::Cpu).unwrap().reshape((1, 6, 1, 1)).unwrap();
        let g = channel_shuffle(&f, 2).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(g, vec![0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
        assert!(channel_shuffle(&f, 4).is_err());
    }

    #[test]
    fn raster_round_trip() {
        let r = Array3::from_shape_fn((3, 2, 5), |(c, i, j)| (c * 10 + i * 5 + j) as f64 / 7.0);
        assert_eq!(tensor_to_raster(&raster_to_tensor(&r, DType::F64).unwrap()).unwrap(), r);
    }
}
