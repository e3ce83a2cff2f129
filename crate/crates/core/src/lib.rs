//! Score-based Bayesian inverse problem solving.
//!
//! Noise-conditional score priors are either analytic ([`score_models`]) or
//! learned by denoising score matching ([`dsm`]). Posteriors are sampled by
//! annealed Hamiltonian Monte Carlo with a Metropolis–Hastings test computed
//! from scores alone ([`hmc`]). [`forward_models`] supplies the linear
//! measurement operators, including undersampled Fourier (MRI) acquisition,
//! and [`phantom_eval`] the synthetic data and reconstruction metrics.

pub mod cli;
pub mod dsm;
pub mod error;
pub mod forward_models;
pub mod hmc;
pub mod numerics;
pub mod phantom_eval;
pub mod score_models;

pub use error::{Error, Result};
pub use numerics::{ComplexImage, RngStream, Tensor};
pub use score_models::ScoreModel;
