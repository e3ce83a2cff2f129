use std::sync::Arc;

use super::ForwardOperator;
use crate::error::{Error, Result};
use crate::numerics::{ComplexImage, RngStream, Tensor};

/// `y = A x + n` with `n ~ N(0, σ_n² I)` on the measured entries.
#[derive(Clone, Debug)]
pub struct GaussianLikelihood {
    op: Arc<dyn ForwardOperator>,
    y: Tensor,
    sigma_n: f64,
    approximate: bool,
}

impl GaussianLikelihood {
    /// For operators without orthonormal rows the tempered score is still
    /// evaluated with the isotropic formula; [`Self::is_approximate`] reports it.
    pub fn new(op: Arc<dyn ForwardOperator>, y: Tensor, sigma_n: f64) -> Result<Self> {
        if !(sigma_n > 0.0 && sigma_n.is_finite()) {
            return Err(Error::Param(format!("sigma_n must be > 0, got {sigma_n}")));
        }
        if y.shape() != op.output_shape() {
            return Err(Error::Shape(format!(
                "measurement has shape {:?}, operator produces {:?}",
                y.shape(),
                op.output_shape()
            )));
        }
        let approximate = !op.is_unitary_rows();
        if approximate {
            log::warn!("operator rows are not orthonormal; tempered likelihood is approximate");
        }
        Ok(GaussianLikelihood {
            op,
            y,
            sigma_n,
            approximate,
        })
    }

    pub fn operator(&self) -> &dyn ForwardOperator {
        self.op.as_ref()
    }

    pub fn measurement(&self) -> &Tensor {
        &self.y
    }

    pub fn sigma_n(&self) -> f64 {
        self.sigma_n
    }

    pub fn is_approximate(&self) -> bool {
        self.approximate
    }

    fn residual(&self, x: &Tensor) -> Result<Tensor> {
        let ax = self.op.apply(x)?;
        Ok(&self.y - &ax)
    }

    /// `−‖y − A x‖² / (2(σ_n² + σ²))`, dropping the normalizing constant.
    pub fn log_likelihood(&self, x: &Tensor, sigma: f64) -> Result<f64> {
        let r = self.residual(x)?;
        Ok(-r.norm_sq() / (2.0 * (self.sigma_n * self.sigma_n + sigma * sigma)))
    }

    /// `Aᵀ(y − A x) / (σ_n² + σ²)`.
    pub fn score(&self, x: &Tensor, sigma: f64) -> Result<Tensor> {
        if !(sigma >= 0.0) {
            return Err(Error::Param(format!("sigma must be >= 0, got {sigma}")));
        }
        let r = self.residual(x)?;
        let g = self.op.adjoint(&r)?;
        Ok(g.scale(1.0 / (self.sigma_n * self.sigma_n + sigma * sigma)))
    }
}

pub fn likelihood_score(lik: &GaussianLikelihood, x: &Tensor, sigma: f64) -> Result<Tensor> {
    lik.score(x, sigma)
}

/// `Aᵀ y` viewed as a complex image; requires a packed `H×W×2` signal space.
pub fn zero_filled(lik: &GaussianLikelihood) -> Result<ComplexImage> {
    ComplexImage::unpack(&lik.op.adjoint(&lik.y)?)
}

/// `A x + σ_n ξ`, with noise only on the entries the operator measures.
pub fn simulate_measurement(
    op: &dyn ForwardOperator,
    x_true: &Tensor,
    sigma_n: f64,
    rng: &mut RngStream,
) -> Result<Tensor> {
    if !(sigma_n >= 0.0) {
        return Err(Error::Param(format!("sigma_n must be >= 0, got {sigma_n}")));
    }
    let mut y = op.apply(x_true)?;
    if sigma_n > 0.0 {
        let mut noise = rng.gaussian(y.shape());
        op.project_measurement(&mut noise);
        y.add_scaled(sigma_n, &noise);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward_models::{
        make_mask, CartesianMaskSpec, CircularBlur, IdentityOperator, MaskedFourierOperator,
        PixelMask,
    };

    fn ident(n: usize) -> Arc<dyn ForwardOperator> {
        Arc::new(IdentityOperator::new(&[n]))
    }

    fn fourier(w: usize, acceleration: usize) -> Arc<dyn ForwardOperator> {
        let spec = CartesianMaskSpec {
            acceleration,
            center_fraction: if acceleration == 1 { 0.0 } else { 0.08 },
            seed: 3,
        };
        let cols = make_mask(&spec, w, &mut RngStream::new(3, 0)).unwrap();
        Arc::new(MaskedFourierOperator::from_columns(&cols, w).unwrap())
    }

    #[test]
    fn zero_residual_gives_zero_score() {
        let mut rng = RngStream::new(1, 0);
        let op = fourier(16, 4);
        let x = rng.gaussian(&[16, 16, 2]);
        let y = op.apply(&x).unwrap();
        let lik = GaussianLikelihood::new(op, y, 0.1).unwrap();
        assert_eq!(lik.score(&x, 0.3).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn identity_score_is_residual_over_variance() {
        let lik = GaussianLikelihood::new(ident(3), Tensor::filled(&[3], 1.0), 0.1).unwrap();
        let s = likelihood_score(&lik, &Tensor::zeros(&[3]), 0.0).unwrap();
        for v in s.data() {
            assert!((v - 100.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn tempering_at_sigma_n_halves_the_score() {
        let mut rng = RngStream::new(2, 0);
        let y = rng.gaussian(&[5]);
        let lik = GaussianLikelihood::new(ident(5), y, 0.3).unwrap();
        let x = rng.gaussian(&[5]);
        let cold = lik.score(&x, 0.0).unwrap();
        let warm = lik.score(&x, 0.3).unwrap();
        assert!((&cold.scale(0.5) - &warm).max_abs() < 1e-12);
    }

    #[test]
    fn score_matches_finite_differences() {
        let mut rng = RngStream::new(4, 0);
        let pix = rng.gaussian(&[6, 5]).map(|v| (v > -0.3) as u8 as f64);
        let ops: Vec<Arc<dyn ForwardOperator>> = vec![
            ident(7),
            Arc::new(PixelMask::new(pix).unwrap()),
            fourier(8, 4),
            Arc::new(CircularBlur::gaussian(0.7, 1, 4, 4).unwrap()),
        ];
        for op in ops {
            let y = rng.gaussian(op.output_shape());
            let lik = GaussianLikelihood::new(op.clone(), y, 0.2).unwrap();
            let x = rng.gaussian(op.input_shape());
            let sigma = 0.5;
            let g = lik.score(&x, sigma).unwrap();
            let h = 1e-5;
            for i in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp.data_mut()[i] += h;
                xm.data_mut()[i] -= h;
                let fd = (lik.log_likelihood(&xp, sigma).unwrap()
                    - lik.log_likelihood(&xm, sigma).unwrap())
                    / (2.0 * h);
                let a = g.data()[i];
                assert!(
                    (a - fd).abs() <= 1e-6 * a.abs().max(1.0),
                    "{op:?}[{i}]: {a} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn blur_likelihood_is_flagged_approximate() {
        let op: Arc<dyn ForwardOperator> = Arc::new(CircularBlur::gaussian(1.0, 1, 4, 4).unwrap());
        let lik = GaussianLikelihood::new(op, Tensor::zeros(&[4, 4]), 0.1).unwrap();
        assert!(lik.is_approximate());
        assert!(!GaussianLikelihood::new(ident(2), Tensor::zeros(&[2]), 0.1)
            .unwrap()
            .is_approximate());
    }

    #[test]
    fn construction_validates_inputs() {
        assert!(matches!(
            GaussianLikelihood::new(ident(2), Tensor::zeros(&[3]), 0.1),
            Err(Error::Shape(_))
        ));
        assert!(GaussianLikelihood::new(ident(2), Tensor::zeros(&[2]), 0.0).is_err());
        let lik = GaussianLikelihood::new(ident(2), Tensor::zeros(&[2]), 0.1).unwrap();
        assert!(matches!(
            lik.score(&Tensor::zeros(&[4]), 0.0),
            Err(Error::Shape(_))
        ));
        assert!(lik.score(&Tensor::zeros(&[2]), -1.0).is_err());
    }

    #[test]
    fn full_mask_zero_filled_recovers_the_image() {
        let mut rng = RngStream::new(5, 0);
        let op = fourier(16, 1);
        let x = rng.gaussian(&[16, 16, 2]);
        let y = simulate_measurement(op.as_ref(), &x, 0.0, &mut rng).unwrap();
        let lik = GaussianLikelihood::new(op, y, 0.1).unwrap();
        let back = zero_filled(&lik).unwrap().pack();
        assert!((&back - &x).max_abs() < 1e-10);
    }

    #[test]
    fn zero_measurement_gives_zero_image() {
        let op = fourier(8, 4);
        let lik = GaussianLikelihood::new(op, Tensor::zeros(&[8, 8, 2]), 0.1).unwrap();
        assert_eq!(zero_filled(&lik).unwrap().pack().max_abs(), 0.0);
    }

    #[test]
    fn noiseless_measurement_is_exact_and_noise_has_the_right_std() {
        let mut rng = RngStream::new(6, 0);
        let op = IdentityOperator::new(&[10_000]);
        let x = rng.gaussian(&[10_000]);
        assert_eq!(simulate_measurement(&op, &x, 0.0, &mut rng).unwrap(), x);
        let y = simulate_measurement(&op, &x, 0.1, &mut rng).unwrap();
        let r = &y - &x;
        let m = r.mean();
        let sd = (r.map(|v| (v - m) * (v - m)).sum() / (r.len() - 1) as f64).sqrt();
        assert!((sd - 0.1).abs() < 0.003, "{sd}");
    }

    #[test]
    fn noise_stays_on_measured_frequencies() {
        let op = fourier(16, 4);
        let mut rng = RngStream::new(7, 0);
        let y =
            simulate_measurement(op.as_ref(), &Tensor::zeros(&[16, 16, 2]), 0.1, &mut rng).unwrap();
        let mut projected = y.clone();
        op.project_measurement(&mut projected);
        assert_eq!(projected, y);
        assert!(y.max_abs() > 0.0);
    }

    #[test]
    fn measurement_is_deterministic_under_seed() {
        let op = fourier(8, 4);
        let x = Tensor::filled(&[8, 8, 2], 0.5);
        let a = simulate_measurement(op.as_ref(), &x, 0.1, &mut RngStream::new(9, 1)).unwrap();
        let b = simulate_measurement(op.as_ref(), &x, 0.1, &mut RngStream::new(9, 1)).unwrap();
        assert_eq!(a, b);
    }
}
