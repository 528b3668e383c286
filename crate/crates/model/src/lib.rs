//! Neural side of the omnidirectional super-resolution pipeline: tensor
//! helpers, guidance modules, the toy latent denoiser, losses, training and
//! evaluation.

pub mod autoencoder;
pub mod denoiser;
pub mod disc;
pub mod duig;
pub mod error;
pub mod eval;
pub mod layers;
pub mod lora;
pub mod losses;
pub mod params;
pub mod predictor;
pub mod tensor;
pub mod train;
pub mod unet;

pub use denoiser::{realosr_pipeline, DSource, ExecMode, ModelConfig, RealOsr};
pub use duig::AblationVariant;
pub use error::{Error, Result};
