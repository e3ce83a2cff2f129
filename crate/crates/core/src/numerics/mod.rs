//! Dense tensors, unitary FFT, reproducible random streams and quadrature.

mod fft;
mod quadrature;
mod rng;
mod tensor;
pub mod tnsr;

pub use fft::{fft2, ifft2, packed_magnitude, ComplexImage, Fft2Plan};
pub use quadrature::{
    simpson_line_integral, simpson_line_integral_with_ends, simpson_weights, DEFAULT_SIMPSON_NODES,
};
pub use rng::{gaussian_sample, RngState, RngStream};
pub use tensor::{axpy, dot, Tensor};
pub use tnsr::{decode_tensor, encode_tensor, read_tensor, write_tensor};
