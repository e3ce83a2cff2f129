//! Linear measurement operators and their Gaussian likelihoods.
//!
//! Complex signals travel through the sampler as real `H×W×2` tensors
//! (see [`ComplexImage::pack`](crate::numerics::ComplexImage::pack)).

mod likelihood;
mod mask;
mod operators;

pub use likelihood::{likelihood_score, simulate_measurement, zero_filled, GaussianLikelihood};
pub use mask::{make_mask, CartesianMaskSpec};
pub use operators::{
    CircularBlur, ForwardOperator, IdentityOperator, MaskedFourierOperator, PixelMask,
};
