//! Linear inverse-problem steps: data-fidelity gradient descent, the
//! posterior-mean estimate from a noisy sample, and the range-space
//! pseudo-inverse correction.

use std::sync::Arc;

use ndarray::{s, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::raster::Raster;
use crate::resample::{resize_to, Edges, ResizeMode};

pub type Shape = (usize, usize, usize);

fn check_shape(what: &str, got: Shape, want: Shape) -> Result<()> {
    if got != want {
        return Err(validation(format!("{what}: expected shape {want:?}, got {got:?}")));
    }
    Ok(())
}

/// A linear degradation operator `A` with a (possibly approximate)
/// pseudo-inverse `A†`.
pub trait LinearOperator: Send + Sync + std::fmt::Debug {
    fn input_shape(&self) -> Shape;
    fn output_shape(&self) -> Shape;
    fn apply(&self, x: &Raster) -> Result<Raster>;
    fn pinv_apply(&self, y: &Raster) -> Result<Raster>;

    /// `Aᵀy`. Operators without an exact adjoint fall back to `A†`.
    fn adjoint_apply(&self, y: &Raster) -> Result<Raster> {
        log::debug!("{:?}: no exact adjoint, using pseudo-inverse in its place", self);
        self.pinv_apply(y)
    }

    fn has_exact_adjoint(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone)]
pub struct Identity {
    pub shape: Shape,
}

impl LinearOperator for Identity {
    fn input_shape(&self) -> Shape {
        self.shape
    }
    fn output_shape(&self) -> Shape {
        self.shape
    }
    fn apply(&self, x: &Raster) -> Result<Raster> {
        check_shape("identity input", x.dim(), self.shape)?;
        Ok(x.clone())
    }
    fn pinv_apply(&self, y: &Raster) -> Result<Raster> {
        check_shape("identity output", y.dim(), self.shape)?;
        Ok(y.clone())
    }
    fn adjoint_apply(&self, y: &Raster) -> Result<Raster> {
        self.pinv_apply(y)
    }
    fn has_exact_adjoint(&self) -> bool {
        true
    }
}

/// Keeps every `stride`-th pixel along both axes. `A A† = I` exactly, and the
/// zero-filling pseudo-inverse is also the adjoint.
#[derive(Debug, Clone)]
pub struct Decimation {
    shape: Shape,
    stride: usize,
}

impl Decimation {
    pub fn new(shape: Shape, stride: usize) -> Result<Self> {
        if stride == 0 || shape.1 % stride != 0 || shape.2 % stride != 0 {
            return Err(validation(format!("decimation stride {stride} does not divide {shape:?}")));
        }
        Ok(Self { shape, stride })
    }
}

impl LinearOperator for Decimation {
    fn input_shape(&self) -> Shape {
        self.shape
    }
    fn output_shape(&self) -> Shape {
        (self.shape.0, self.shape.1 / self.stride, self.shape.2 / self.stride)
    }
    fn apply(&self, x: &Raster) -> Result<Raster> {
        check_shape("decimation input", x.dim(), self.shape)?;
        let s = self.stride as isize;
        Ok(x.slice(s![.., ..;s, ..;s]).to_owned())
    }
    fn pinv_apply(&self, y: &Raster) -> Result<Raster> {
        check_shape("decimation output", y.dim(), self.output_shape())?;
        let mut x = Array3::zeros(self.shape);
        let s = self.stride as isize;
        x.slice_mut(s![.., ..;s, ..;s]).assign(y);
        Ok(x)
    }
    fn adjoint_apply(&self, y: &Raster) -> Result<Raster> {
        self.pinv_apply(y)
    }
    fn has_exact_adjoint(&self) -> bool {
        true
    }
}

/// Bicubic downsampling by an integer factor; `A†` is bicubic upsampling.
#[derive(Debug, Clone)]
pub struct BicubicOperator {
    shape: Shape,
    scale: usize,
}

impl BicubicOperator {
    pub fn scale(&self) -> usize {
        self.scale
    }
}

pub fn bicubic_operator(scale: usize, shape: Shape) -> Result<BicubicOperator> {
    if scale < 2 {
        return Err(validation(format!("bicubic operator scale must be >= 2, got {scale}")));
    }
    if shape.0 == 0 || shape.1 == 0 || shape.2 == 0 || shape.1 % scale != 0 || shape.2 % scale != 0 {
        return Err(validation(format!("shape {shape:?} is not divisible by scale {scale}")));
    }
    Ok(BicubicOperator { shape, scale })
}

impl LinearOperator for BicubicOperator {
    fn input_shape(&self) -> Shape {
        self.shape
    }
    fn output_shape(&self) -> Shape {
        (self.shape.0, self.shape.1 / self.scale, self.shape.2 / self.scale)
    }
    fn apply(&self, x: &Raster) -> Result<Raster> {
        check_shape("bicubic input", x.dim(), self.shape)?;
        let (_, h, w) = self.output_shape();
        resize_to(x, h, w, ResizeMode::Bicubic, Edges::PLANAR)
    }
    fn pinv_apply(&self, y: &Raster) -> Result<Raster> {
        check_shape("bicubic output", y.dim(), self.output_shape())?;
        resize_to(y, self.shape.1, self.shape.2, ResizeMode::Bicubic, Edges::PLANAR)
    }
}

/// Observation `y = Ax + n`. The prior weight and noise model are carried as
/// metadata only; the learned denoiser plays the prior's role.
#[derive(Debug, Clone)]
pub struct InverseProblem {
    pub y: Raster,
    pub op: Arc<dyn LinearOperator>,
    pub lambda: f64,
    pub noise: String,
}

impl InverseProblem {
    pub fn new(y: Raster, op: Arc<dyn LinearOperator>) -> Result<Self> {
        check_shape("observation", y.dim(), op.output_shape())?;
        Ok(Self { y, op, lambda: 0.0, noise: "unspecified".into() })
    }

    /// `‖y − Ax‖²`.
    pub fn residual(&self, x: &Raster) -> Result<f64> {
        let ax = self.op.apply(x)?;
        Ok((&self.y - &ax).iter().map(|v| v * v).sum())
    }
}

/// How predicted noise is scaled when estimating the clean sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScaling {
    /// `(x_t + (1 − ᾱ)ε)/√ᾱ`.
    #[default]
    AsPrinted,
    /// `(x_t + √(1 − ᾱ)ε)/√ᾱ`.
    Conventional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub alpha: f64,
    pub zeta: f64,
    pub alpha_bar: f64,
    #[serde(default)]
    pub scaling: NoiseScaling,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self { alpha: 1.0, zeta: 0.0, alpha_bar: 0.25, scaling: NoiseScaling::AsPrinted }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(validation(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if !(self.zeta >= 0.0) {
            return Err(validation(format!("zeta must be >= 0, got {}", self.zeta)));
        }
        if !(self.alpha_bar > 0.0 && self.alpha_bar <= 1.0) {
            return Err(validation(format!("alpha_bar must be in (0, 1], got {}", self.alpha_bar)));
        }
        Ok(())
    }
}

/// `x − 2α·Aᵀ(Ax − y)`, one gradient step on `‖y − Ax‖²`.
pub fn grad_step(x: &Raster, problem: &InverseProblem, alpha: f64) -> Result<Raster> {
    check_shape("x", x.dim(), problem.op.input_shape())?;
    let r = problem.op.apply(x)? - &problem.y;
    let g = problem.op.adjoint_apply(&r)?;
    Ok(x - &(g * (2.0 * alpha)))
}

/// `x − α(A†Ax − A†y)`.
pub fn ddnm_step(x: &Raster, problem: &InverseProblem, alpha: f64) -> Result<Raster> {
    check_shape("x", x.dim(), problem.op.input_shape())?;
    let pa = problem.op.pinv_apply(&problem.op.apply(x)?)?;
    let py = problem.op.pinv_apply(&problem.y)?;
    Ok(x - &((pa - py) * alpha))
}

/// Clean-sample estimate from a noisy sample and predicted noise.
pub fn dps_estimate_x0(x_t: &Raster, eps: &Raster, alpha_bar: f64, scaling: NoiseScaling) -> Result<Raster> {
    if !(alpha_bar > 0.0 && alpha_bar <= 1.0) {
        return Err(validation(format!("alpha_bar must be in (0, 1], got {alpha_bar}")));
    }
    if x_t.dim() != eps.dim() {
        return Err(validation(format!("x_t {:?} and eps {:?} differ in shape", x_t.dim(), eps.dim())));
    }
    let k = match scaling {
        NoiseScaling::AsPrinted => 1.0 - alpha_bar,
        NoiseScaling::Conventional => (1.0 - alpha_bar).sqrt(),
    };
    Ok((x_t + &(eps * k)) / alpha_bar.sqrt())
}

/// `x₀ − ζ∇‖y − Ax₀‖²`.
pub fn dps_guidance(x0: &Raster, problem: &InverseProblem, zeta: f64) -> Result<Raster> {
    grad_step(x0, problem, zeta)
}
