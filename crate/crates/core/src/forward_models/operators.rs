use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::numerics::{ComplexImage, Fft2Plan, Tensor};

/// A linear map between real tensors.
pub trait ForwardOperator: Send + Sync + Debug {
    fn input_shape(&self) -> &[usize];
    fn output_shape(&self) -> &[usize];
    fn apply(&self, x: &Tensor) -> Result<Tensor>;
    fn adjoint(&self, y: &Tensor) -> Result<Tensor>;

    /// True when `A Aᵀ` is an orthogonal projection, i.e. the measured rows
    /// are orthonormal. Unmeasured outputs are represented as structural zeros.
    fn is_unitary_rows(&self) -> bool;

    /// Zero the entries of a measurement-space tensor that the operator
    /// never observes. Identity for fully observed operators.
    fn project_measurement(&self, _y: &mut Tensor) {}
}

fn check_shape(what: &str, t: &Tensor, expected: &[usize]) -> Result<()> {
    if t.shape() != expected {
        return Err(Error::Shape(format!(
            "{what}: expected {expected:?}, got {:?}",
            t.shape()
        )));
    }
    Ok(())
}

fn check_binary(mask: &Tensor) -> Result<()> {
    if mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
        return Err(Error::Param("mask entries must be 0 or 1".into()));
    }
    Ok(())
}

/// `A = I` (denoising).
#[derive(Clone, Debug)]
pub struct IdentityOperator {
    shape: Vec<usize>,
}

impl IdentityOperator {
    pub fn new(shape: &[usize]) -> Self {
        IdentityOperator {
            shape: shape.to_vec(),
        }
    }
}

impl ForwardOperator for IdentityOperator {
    fn input_shape(&self) -> &[usize] {
        &self.shape
    }
    fn output_shape(&self) -> &[usize] {
        &self.shape
    }
    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        check_shape("identity input", x, &self.shape)?;
        Ok(x.clone())
    }
    fn adjoint(&self, y: &Tensor) -> Result<Tensor> {
        check_shape("identity measurement", y, &self.shape)?;
        Ok(y.clone())
    }
    fn is_unitary_rows(&self) -> bool {
        true
    }
}

/// Elementwise 0/1 mask (inpainting).
#[derive(Clone, Debug)]
pub struct PixelMask {
    mask: Tensor,
}

impl PixelMask {
    pub fn new(mask: Tensor) -> Result<Self> {
        check_binary(&mask)?;
        Ok(PixelMask { mask })
    }

    pub fn mask(&self) -> &Tensor {
        &self.mask
    }
}

impl ForwardOperator for PixelMask {
    fn input_shape(&self) -> &[usize] {
        self.mask.shape()
    }
    fn output_shape(&self) -> &[usize] {
        self.mask.shape()
    }
    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        check_shape("mask input", x, self.mask.shape())?;
        Ok(x.zip_map(&self.mask, |a, m| a * m))
    }
    fn adjoint(&self, y: &Tensor) -> Result<Tensor> {
        self.apply(y)
    }
    fn is_unitary_rows(&self) -> bool {
        true
    }
    fn project_measurement(&self, y: &mut Tensor) {
        for (v, &m) in y.data_mut().iter_mut().zip(self.mask.data()) {
            *v *= m;
        }
    }
}

/// Undersampled unitary Fourier transform `M_Ω F` on packed complex images.
///
/// Input and output are both `H×W×2`; unsampled k-space entries are zero.
#[derive(Clone, Debug)]
pub struct MaskedFourierOperator {
    mask: Tensor,
    plan: Fft2Plan,
    shape: Vec<usize>,
}

impl MaskedFourierOperator {
    /// `mask` is a binary `H×W` array that must be constant down each column.
    pub fn new(mask: Tensor) -> Result<Self> {
        let (h, w) = match mask.shape() {
            &[h, w] => (h, w),
            other => return Err(Error::Shape(format!("mask must be H×W, got {other:?}"))),
        };
        check_binary(&mask)?;
        let d = mask.data();
        for r in 1..h {
            if d[r * w..(r + 1) * w] != d[..w] {
                return Err(Error::Param(format!(
                    "mask row {r} differs from row 0; only column masks are supported"
                )));
            }
        }
        let plan = Fft2Plan::new(h, w)?;
        Ok(MaskedFourierOperator {
            mask,
            plan,
            shape: vec![h, w, 2],
        })
    }

    /// Broadcast a length-`W` column mask down `height` rows.
    pub fn from_columns(columns: &Tensor, height: usize) -> Result<Self> {
        if columns.rank() != 1 {
            return Err(Error::Shape(format!(
                "column mask must be 1-D, got {:?}",
                columns.shape()
            )));
        }
        let w = columns.len();
        let data = (0..height)
            .flat_map(|_| columns.data().iter().copied())
            .collect();
        MaskedFourierOperator::new(Tensor::new(vec![height, w], data)?)
    }

    pub fn mask(&self) -> &Tensor {
        &self.mask
    }

    pub fn plan(&self) -> &Fft2Plan {
        &self.plan
    }

    fn mask_planes(&self, img: &mut ComplexImage) {
        let m = self.mask.data();
        for plane in [&mut img.real, &mut img.imag] {
            for (v, &k) in plane.data_mut().iter_mut().zip(m) {
                *v *= k;
            }
        }
    }
}

impl ForwardOperator for MaskedFourierOperator {
    fn input_shape(&self) -> &[usize] {
        &self.shape
    }
    fn output_shape(&self) -> &[usize] {
        &self.shape
    }
    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        check_shape("image", x, &self.shape)?;
        let mut k = self.plan.forward(&ComplexImage::unpack(x)?)?;
        self.mask_planes(&mut k);
        Ok(k.pack())
    }
    fn adjoint(&self, y: &Tensor) -> Result<Tensor> {
        check_shape("k-space", y, &self.shape)?;
        let mut k = ComplexImage::unpack(y)?;
        self.mask_planes(&mut k);
        Ok(self.plan.inverse(&k)?.pack())
    }
    fn is_unitary_rows(&self) -> bool {
        true
    }
    fn project_measurement(&self, y: &mut Tensor) {
        let m = self.mask.data();
        for (pair, &k) in y.data_mut().chunks_exact_mut(2).zip(m) {
            pair[0] *= k;
            pair[1] *= k;
        }
    }
}

/// Circular 2D convolution of an `H×W` image with a small kernel
/// (deconvolution). Rows are not orthonormal.
#[derive(Clone, Debug)]
pub struct CircularBlur {
    kernel: Tensor,
    shape: Vec<usize>,
}

impl CircularBlur {
    /// `kernel` is `kh×kw` with odd sides, centred on its middle entry.
    pub fn new(kernel: Tensor, height: usize, width: usize) -> Result<Self> {
        match kernel.shape() {
            &[kh, kw] if kh % 2 == 1 && kw % 2 == 1 && kh <= height && kw <= width => {}
            other => {
                return Err(Error::Shape(format!(
                    "blur kernel must be odd-sized and fit in {height}×{width}, got {other:?}"
                )))
            }
        }
        Ok(CircularBlur {
            kernel,
            shape: vec![height, width],
        })
    }

    /// Normalized separable Gaussian kernel of the given half-width.
    pub fn gaussian(std: f64, radius: usize, height: usize, width: usize) -> Result<Self> {
        if !(std > 0.0) {
            return Err(Error::Param(format!("blur std must be > 0, got {std}")));
        }
        let side = 2 * radius + 1;
        let r = radius as f64;
        let mut k: Vec<f64> = (0..side * side)
            .map(|i| {
                let (dy, dx) = ((i / side) as f64 - r, (i % side) as f64 - r);
                (-(dx * dx + dy * dy) / (2.0 * std * std)).exp()
            })
            .collect();
        let total: f64 = k.iter().sum();
        k.iter_mut().for_each(|v| *v /= total);
        CircularBlur::new(Tensor::new(vec![side, side], k)?, height, width)
    }

    fn convolve(&self, x: &Tensor, flip: bool) -> Tensor {
        let (h, w) = (self.shape[0], self.shape[1]);
        let (kh, kw) = (self.kernel.shape()[0], self.kernel.shape()[1]);
        let (ch, cw) = ((kh / 2) as isize, (kw / 2) as isize);
        let (k, src) = (self.kernel.data(), x.data());
        let mut out = vec![0.0; h * w];
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                for a in 0..kh {
                    for b in 0..kw {
                        let (dy, dx) = (a as isize - ch, b as isize - cw);
                        let (dy, dx) = if flip { (-dy, -dx) } else { (dy, dx) };
                        let rr = (r as isize - dy).rem_euclid(h as isize) as usize;
                        let cc = (c as isize - dx).rem_euclid(w as isize) as usize;
                        acc += k[a * kw + b] * src[rr * w + cc];
                    }
                }
                out[r * w + c] = acc;
            }
        }
        Tensor::new(self.shape.clone(), out).expect("blur shape")
    }
}

impl ForwardOperator for CircularBlur {
    fn input_shape(&self) -> &[usize] {
        &self.shape
    }
    fn output_shape(&self) -> &[usize] {
        &self.shape
    }
    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        check_shape("blur input", x, &self.shape)?;
        Ok(self.convolve(x, false))
    }
    fn adjoint(&self, y: &Tensor) -> Result<Tensor> {
        check_shape("blur measurement", y, &self.shape)?;
        Ok(self.convolve(y, true))
    }
    fn is_unitary_rows(&self) -> bool {
        false
    }
}
