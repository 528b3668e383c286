//! Small CNN regressing `[d_n, d_b]` from an LR view.

use candle_core::{DType, Tensor, D};
use omnisr::degrade::{DegradationParams, DegradationPredictor};
use omnisr::Raster;

use crate::error::{validation, Result};
use crate::layers::{Conv2d, Linear};
use crate::params::ParamStore;
use crate::tensor::raster_to_tensor;

pub const PREDICTOR_PREFIX: &str = "predictor.";

#[derive(Debug, Clone)]
pub struct LearnedPredictor {
    convs: Vec<Conv2d>,
    head: Linear,
    dtype: DType,
}

impl LearnedPredictor {
    pub fn new(store: &mut ParamStore) -> Result<Self> {
        let convs = vec![
            Conv2d::new(store, "predictor.c1", 3, 16, 3, 2, 1, true)?,
            Conv2d::new(store, "predictor.c2", 16, 32, 3, 2, 1, true)?,
            Conv2d::new(store, "predictor.c3", 32, 32, 3, 2, 1, true)?,
        ];
        let head = Linear::new(store, "predictor.head", 32, 2)?;
        Ok(Self { convs, head, dtype: store.dtype() })
    }

    /// `(B, 3, H, W)` → `(B, 2)` in `(0, 1)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = x.dims4()?;
        if c != 3 || h < 8 || w < 8 {
            return Err(validation(format!("predictor expects (B, 3, ≥8, ≥8), got {:?}", x.dims())));
        }
        let mut h = x.clone();
        for conv in &self.convs {
            h = conv.forward(&h)?.silu()?;
        }
        let pooled = h.mean(D::Minus1)?.mean(D::Minus1)?;
        Ok(candle_nn::ops::sigmoid(&self.head.forward(&pooled)?)?)
    }
}

impl DegradationPredictor for LearnedPredictor {
    fn predict(&self, view: &Raster) -> omnisr::Result<DegradationParams> {
        let run = || -> Result<[f64; 2]> {
            let out = self.forward(&raster_to_tensor(view, self.dtype)?)?;
            let v = out.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
            Ok([v[0], v[1]])
        };
        let [d_n, d_b] = run().map_err(|e| omnisr::Error::Validation(format!("degradation predictor: {e}")))?;
        DegradationParams::new(d_n.clamp(0.0, 1.0), d_b.clamp(0.0, 1.0))
    }
}
