//! Orthonormal 2D FFT over [`ComplexImage`].
//!
//! Both directions scale by `1/sqrt(H*W)`, so the transform is unitary and
//! its adjoint is its inverse.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Tensor;
use crate::error::{Error, Result};

/// Complex H×W image stored as separate real and imaginary planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    pub real: Tensor,
    pub imag: Tensor,
}

impl ComplexImage {
    pub fn new(real: Tensor, imag: Tensor) -> Result<Self> {
        if real.rank() != 2 {
            return Err(Error::Shape(format!(
                "complex image planes must be H×W, got {:?}",
                real.shape()
            )));
        }
        real.check_same_shape(&imag)?;
        Ok(ComplexImage { real, imag })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        ComplexImage {
            real: Tensor::zeros(&[height, width]),
            imag: Tensor::zeros(&[height, width]),
        }
    }

    /// Real image with zero imaginary part.
    pub fn from_real(real: Tensor) -> Result<Self> {
        let imag = Tensor::zeros(real.shape());
        ComplexImage::new(real, imag)
    }

    pub fn height(&self) -> usize {
        self.real.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.real.shape()[1]
    }

    /// Interleave into a real `H×W×2` tensor (channel 0 real, 1 imaginary).
    pub fn pack(&self) -> Tensor {
        let (h, w) = (self.height(), self.width());
        let mut data = Vec::with_capacity(2 * h * w);
        for (&re, &im) in self.real.data().iter().zip(self.imag.data()) {
            data.push(re);
            data.push(im);
        }
        Tensor::new(vec![h, w, 2], data).expect("packed shape")
    }

    pub fn unpack(packed: &Tensor) -> Result<Self> {
        match packed.shape() {
            &[h, w, 2] => {
                let d = packed.data();
                let real = d.iter().step_by(2).copied().collect();
                let imag = d.iter().skip(1).step_by(2).copied().collect();
                Ok(ComplexImage {
                    real: Tensor::new(vec![h, w], real)?,
                    imag: Tensor::new(vec![h, w], imag)?,
                })
            }
            other => Err(Error::Shape(format!(
                "expected an H×W×2 tensor, got {other:?}"
            ))),
        }
    }

    /// Pixelwise modulus.
    pub fn magnitude(&self) -> Tensor {
        self.real.zip_map(&self.imag, f64::hypot)
    }

    fn to_buffer(&self) -> Vec<Complex64> {
        self.real
            .data()
            .iter()
            .zip(self.imag.data())
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect()
    }

    fn from_buffer(h: usize, w: usize, buf: &[Complex64]) -> Self {
        let real = buf.iter().map(|c| c.re).collect();
        let imag = buf.iter().map(|c| c.im).collect();
        ComplexImage {
            real: Tensor::new(vec![h, w], real).expect("buffer shape"),
            imag: Tensor::new(vec![h, w], imag).expect("buffer shape"),
        }
    }
}

/// Magnitude image of a packed `H×W×2` tensor.
pub fn packed_magnitude(packed: &Tensor) -> Result<Tensor> {
    Ok(ComplexImage::unpack(packed)?.magnitude())
}

/// Precomputed row/column transforms for a fixed image size.
#[derive(Clone)]
pub struct Fft2Plan {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2Plan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2Plan({}x{})", self.height, self.width)
    }
}

impl Fft2Plan {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        for (name, n) in [("height", height), ("width", width)] {
            if !n.is_power_of_two() {
                return Err(Error::Sizing(format!(
                    "FFT {name} {n} is not a power of two"
                )));
            }
        }
        let mut planner = FftPlanner::new();
        Ok(Fft2Plan {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn forward(&self, img: &ComplexImage) -> Result<ComplexImage> {
        self.run(img, &self.row_fwd, &self.col_fwd)
    }

    pub fn inverse(&self, img: &ComplexImage) -> Result<ComplexImage> {
        self.run(img, &self.row_inv, &self.col_inv)
    }

    fn run(
        &self,
        img: &ComplexImage,
        rows: &Arc<dyn Fft<f64>>,
        cols: &Arc<dyn Fft<f64>>,
    ) -> Result<ComplexImage> {
        let (h, w) = (self.height, self.width);
        if img.height() != h || img.width() != w {
            return Err(Error::Shape(format!(
                "plan is {h}x{w} but image is {}x{}",
                img.height(),
                img.width()
            )));
        }
        let mut buf = img.to_buffer();
        for row in buf.chunks_exact_mut(w) {
            rows.process(row);
        }
        let mut column = vec![Complex64::default(); h];
        for c in 0..w {
            for r in 0..h {
                column[r] = buf[r * w + c];
            }
            cols.process(&mut column);
            for r in 0..h {
                buf[r * w + c] = column[r];
            }
        }
        let norm = 1.0 / ((h * w) as f64).sqrt();
        for v in &mut buf {
            *v *= norm;
        }
        Ok(ComplexImage::from_buffer(h, w, &buf))
    }
}

/// Unitary forward 2D DFT. Both dimensions must be powers of two.
pub fn fft2(img: &ComplexImage) -> Result<ComplexImage> {
    Fft2Plan::new(img.height(), img.width())?.forward(img)
}

/// Unitary inverse 2D DFT.
pub fn ifft2(img: &ComplexImage) -> Result<ComplexImage> {
    Fft2Plan::new(img.height(), img.width())?.inverse(img)
}
