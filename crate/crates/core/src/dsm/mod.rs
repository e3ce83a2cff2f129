//! Denoising score matching: a noise-conditional score network trained with
//! the residual DSM objective, with spectral-norm projection after every
//! Adam step.

mod checkpoint;
mod network;
mod spectral;
mod train;

pub use checkpoint::{Checkpoint, DSMC_MAGIC, DSMC_VERSION};
pub use network::{
    Activation, Gradients, Layer, LayerGrad, LayerKind, ScoreNetwork, DEFAULT_SIGMA_FLOOR,
};
pub use spectral::{
    estimate_spectral_norm, project_spectral_norm, spectral_normalize, PowerIterationState,
};
pub use train::{
    backprop_check, dsm_loss, dsm_loss_with_noise, train, AdamState, DsmNoise, TrainConfig,
    TrainOutput, Trainer,
};
