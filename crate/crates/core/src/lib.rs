//! Geometry, degradation synthesis, metrics and linear inverse-problem
//! steps for omnidirectional (equirectangular) super-resolution.

pub mod degrade;
pub mod error;
pub mod metrics;
pub mod raster;
pub mod resample;
pub mod sphere_proj;
pub mod synthetic;
pub mod unfold;

pub use error::{Error, Result};
pub use raster::{ErpImage, Raster};
