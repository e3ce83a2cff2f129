//! Noise-conditional score functions.
//!
//! A [`ScoreModel`] returns `∇ₓ log p_{σ²}(x)` where `p_{σ²} = p ∗ N(0, σ²I)`.
//! The analytic models here are closed under Gaussian convolution, which
//! makes them exact references for the learned networks and the sampler.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{RngStream, Tensor};

pub trait ScoreModel: Send + Sync {
    /// Score of the σ-convolved density at `x`. Output has `x`'s shape.
    fn score(&self, x: &Tensor, sigma: f64) -> Tensor;

    /// Number of scalar degrees of freedom of the signal.
    fn dim(&self) -> usize;
}

impl<T: ScoreModel + ?Sized> ScoreModel for &T {
    fn score(&self, x: &Tensor, sigma: f64) -> Tensor {
        (**self).score(x, sigma)
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
}

impl<T: ScoreModel + ?Sized> ScoreModel for Box<T> {
    fn score(&self, x: &Tensor, sigma: f64) -> Tensor {
        (**self).score(x, sigma)
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
}

impl<T: ScoreModel + ?Sized> ScoreModel for Arc<T> {
    fn score(&self, x: &Tensor, sigma: f64) -> Tensor {
        (**self).score(x, sigma)
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
}

/// `N(mean, τ²I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct IsotropicGaussianScore {
    mean: Tensor,
    tau2: f64,
}

impl IsotropicGaussianScore {
    pub fn new(mean: Tensor, tau2: f64) -> Result<Self> {
        if !(tau2 > 0.0 && tau2.is_finite()) {
            return Err(Error::Param(format!(
                "prior variance must be > 0, got {tau2}"
            )));
        }
        Ok(IsotropicGaussianScore { mean, tau2 })
    }

    /// Zero-mean standard normal in `dim` dimensions.
    pub fn standard(dim: usize) -> Self {
        IsotropicGaussianScore {
            mean: Tensor::zeros(&[dim]),
            tau2: 1.0,
        }
    }

    pub fn mean(&self) -> &Tensor {
        &self.mean
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }

    pub fn log_density(&self, x: &Tensor, sigma: f64) -> f64 {
        let v = self.tau2 + sigma * sigma;
        let d = self.mean.len() as f64;
        -(x - &self.mean).norm_sq() / (2.0 * v) - 0.5 * d * (2.0 * PI * v).ln()
    }
}

impl ScoreModel for IsotropicGaussianScore {
    fn score(&self, x: &Tensor, sigma: f64) -> Tensor {
        gaussian_score(self, x, sigma)
    }

    fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `(mean − x)/(τ² + σ²)`
pub fn gaussian_score(model: &IsotropicGaussianScore, x: &Tensor, sigma: f64) -> Tensor {
    let v = model.tau2 + sigma * sigma;
    model.mean.zip_map(x, |m, xi| (m - xi) / v)
}

/// Mixture of isotropic Gaussians `Σₖ wₖ N(μₖ, vₖI)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixtureScore {
    weights: Vec<f64>,
    means: Vec<Tensor>,
    variances: Vec<f64>,
    log_weights: Vec<f64>,
}

impl GaussianMixtureScore {
    pub fn new(weights: Vec<f64>, means: Vec<Tensor>, variances: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != variances.len() {
            return Err(Error::Param(format!(
                "mixture needs matching non-empty weights/means/variances, got {}/{}/{}",
                weights.len(),
                means.len(),
                variances.len()
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 || weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Param(format!(
                "mixture weights must be a probability vector (sum {total})"
            )));
        }
        if let Some(v) = variances.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Param(format!(
                "component variance must be > 0, got {v}"
            )));
        }
        for m in &means[1..] {
            means[0].check_same_shape(m)?;
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(GaussianMixtureScore {
            weights,
            means,
            variances,
            log_weights,
        })
    }

    /// Builds a mixture from unnormalized weights.
    pub fn with_relative_weights(
        weights: Vec<f64>,
        means: Vec<Tensor>,
        variances: Vec<f64>,
    ) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Param(
                "mixture weights must have positive sum".into(),
            ));
        }
        let mut w: Vec<f64> = weights.iter().map(|w| w / total).collect();
        // Absorb rounding into the largest weight so the sum is 1 to 1e-12.
        let drift = 1.0 - w.iter().sum::<f64>();
        let imax = (0..w.len())
            .max_by(|&a, &b| w[a].total_cmp(&w[b]))
            .unwrap_or(0);
        w[imax] += drift;
        GaussianMixtureScore::new(w, means, variances)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Tensor] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    /// Per-component log joint `log wₖ + log N(x; μₖ, (vₖ+σ²)I)`.
    fn component_logs(&self, x: &Tensor, sigma: f64) -> Vec<f64> {
        let d = x.len() as f64;
        let s2 = sigma * sigma;
        self.means
            .iter()
            .zip(&self.variances)
            .zip(&self.log_weights)
            .map(|((mu, &v), &lw)| {
                let var = v + s2;
                lw - (x - mu).norm_sq() / (2.0 * var) - 0.5 * d * (2.0 * PI * var).ln()
            })
            .collect()
    }

    /// Normalized log density of the σ-convolved mixture.
    pub fn log_density(&self, x: &Tensor, sigma: f64) -> f64 {
        log_sum_exp(&self.component_logs(x, sigma))
    }

    /// Exact samples from the σ-convolved mixture, stacked as `n × shape`.
    pub fn sample(&self, rng: &mut RngStream, n: usize, sigma: f64) -> Tensor {
        let shape = self.means[0].shape().to_vec();
        let samples: Vec<Tensor> = (0..n)
            .map(|_| {
                let u = rng.uniform();
                let mut acc = 0.0;
                let mut k = self.weights.len() - 1;
                for (i, w) in self.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                let sd = (self.variances[k] + sigma * sigma).sqrt();
                self.means[k].axpy(sd, &rng.gaussian(&shape))
            })
            .collect();
        Tensor::stack(&samples).expect("non-empty sample batch")
    }
}

impl ScoreModel for GaussianMixtureScore {
    fn score(&self, x: &Tensor, sigma: f64) -> Tensor {
        mixture_score(self, x, sigma)
    }

    fn dim(&self) -> usize {
        self.means[0].len()
    }
}

/// Gradient of the convolved mixture log density, via responsibilities.
pub fn mixture_score(model: &GaussianMixtureScore, x: &Tensor, sigma: f64) -> Tensor {
    let logs = model.component_logs(x, sigma);
    let lse = log_sum_exp(&logs);
    let s2 = sigma * sigma;
    let mut out = Tensor::zeros(x.shape());
    for ((mu, &v), &l) in model.means.iter().zip(&model.variances).zip(&logs) {
        let r = (l - lse).exp();
        if r == 0.0 {
            continue;
        }
        let c = r / (v + s2);
        for ((o, &m), &xi) in out.data_mut().iter_mut().zip(mu.data()).zip(x.data()) {
            *o += c * (m - xi);
        }
    }
    out
}

pub fn mixture_logdensity(model: &GaussianMixtureScore, x: &Tensor, sigma: f64) -> f64 {
    model.log_density(x, sigma)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Two interleaved half-circle arcs realized as an equal-weight mixture.
///
/// The upper arc is centred at the origin, the lower arc at `(r, r/2)` and
/// opens upward, matching the usual two-moons construction.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoMoonsScore {
    mixture: GaussianMixtureScore,
}

impl TwoMoonsScore {
    pub const DEFAULT_PER_ARC: usize = 16;
    pub const DEFAULT_RADIUS: f64 = 1.0;
    pub const DEFAULT_STD: f64 = 0.1;

    pub fn new(per_arc: usize, radius: f64, std: f64) -> Result<Self> {
        if per_arc < 2 {
            return Err(Error::Param(
                "two-moons needs at least 2 components per arc".into(),
            ));
        }
        if !(radius > 0.0 && std > 0.0) {
            return Err(Error::Param("two-moons radius and std must be > 0".into()));
        }
        let mut means = Vec::with_capacity(2 * per_arc);
        for k in 0..per_arc {
            let t = PI * k as f64 / (per_arc - 1) as f64;
            means.push(Tensor::from_vec(vec![radius * t.cos(), radius * t.sin()]));
        }
        for k in 0..per_arc {
            let t = PI * k as f64 / (per_arc - 1) as f64;
            means.push(Tensor::from_vec(vec![
                radius * (1.0 - t.cos()),
                radius * (0.5 - t.sin()),
            ]));
        }
        let n = means.len();
        let mixture =
            GaussianMixtureScore::with_relative_weights(vec![1.0; n], means, vec![std * std; n])?;
        Ok(TwoMoonsScore { mixture })
    }

    pub fn mixture(&self) -> &GaussianMixtureScore {
        &self.mixture
    }

    pub fn into_mixture(self) -> GaussianMixtureScore {
        self.mixture
    }
}

impl Default for TwoMoonsScore {
    fn default() -> Self {
        TwoMoonsScore::new(
            Self::DEFAULT_PER_ARC,
            Self::DEFAULT_RADIUS,
            Self::DEFAULT_STD,
        )
        .expect("default two-moons parameters are valid")
    }
}

impl ScoreModel for TwoMoonsScore {
    fn score(&self, x: &Tensor, sigma: f64) -> Tensor {
        self.mixture.score(x, sigma)
    }

    fn dim(&self) -> usize {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Tensor {
        Tensor::from_vec(xs.to_vec())
    }

    fn two_bumps(var: f64) -> GaussianMixtureScore {
        GaussianMixtureScore::new(
            vec![0.5, 0.5],
            vec![v(&[1.0, 0.0]), v(&[-1.0, 0.0])],
            vec![var, var],
        )
        .unwrap()
    }

    /// Central differences of a scalar function.
    fn fd_grad(f: impl Fn(&Tensor) -> f64, x: &Tensor, h: f64) -> Tensor {
        let mut g = Tensor::zeros(x.shape());
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.data_mut()[i] += h;
            xm.data_mut()[i] -= h;
            g.data_mut()[i] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn gaussian_score_examples() {
        let m = IsotropicGaussianScore::standard(2);
        assert_eq!(m.score(&v(&[0.0, 0.0]), 0.0), v(&[0.0, 0.0]));
        assert_eq!(m.score(&v(&[1.0, 0.0]), 0.0), v(&[-1.0, 0.0]));
        assert_eq!(m.score(&v(&[1.0, 0.0]), 1.0), v(&[-0.5, 0.0]));
    }

    #[test]
    fn denoiser_identity_is_shrinkage() {
        let mean = v(&[0.5, -1.0, 2.0]);
        let m = IsotropicGaussianScore::new(mean.clone(), 0.7).unwrap();
        let x = v(&[1.5, 0.25, -3.0]);
        let sigma: f64 = 0.8;
        let s2 = sigma * sigma;
        let denoised = x.axpy(s2, &m.score(&x, sigma));
        let shrink = x.scale(0.7 / (0.7 + s2)).axpy(s2 / (0.7 + s2), &mean);
        assert!((&denoised - &shrink).max_abs() < 1e-15);
    }

    #[test]
    fn mixture_symmetry_and_degenerate_case() {
        let m = two_bumps(1.0);
        assert_eq!(m.score(&v(&[0.0, 0.0]), 0.3), v(&[0.0, 0.0]));

        let mean = v(&[0.3, -0.2]);
        let single = GaussianMixtureScore::new(vec![1.0], vec![mean.clone()], vec![0.6]).unwrap();
        let gauss = IsotropicGaussianScore::new(mean, 0.6).unwrap();
        for (x, s) in [(v(&[1.0, 2.0]), 0.0), (v(&[-3.0, 0.5]), 1.3)] {
            assert!((&single.score(&x, s) - &gauss.score(&x, s)).max_abs() < 1e-14);
        }
    }

    #[test]
    fn mixture_score_matches_finite_differences() {
        let m = two_bumps(0.25);
        let x = v(&[0.5, 0.3]);
        let fd = fd_grad(|p| m.log_density(p, 0.0), &x, 1e-5);
        let s = m.score(&x, 0.0);
        let rel = (&s - &fd).norm() / s.norm();
        assert!(rel < 1e-6, "rel {rel}");
    }

    #[test]
    fn analytic_scores_match_finite_differences_on_grid() {
        let moons = TwoMoonsScore::default();
        let gauss = IsotropicGaussianScore::new(v(&[0.2, -0.4]), 1.5).unwrap();
        for &sigma in &[0.0, 0.2, 1.0] {
            for i in 0..7 {
                for j in 0..7 {
                    let x = v(&[-1.5 + 0.5 * i as f64, -1.0 + 0.4 * j as f64]);
                    let fd = fd_grad(|p| moons.mixture().log_density(p, sigma), &x, 1e-5);
                    let s = moons.score(&x, sigma);
                    assert!(
                        (&s - &fd).norm() <= 1e-6 * s.norm().max(1.0),
                        "moons {x:?} {sigma}"
                    );
                    let fd = fd_grad(|p| gauss.log_density(p, sigma), &x, 1e-5);
                    let s = gauss.score(&x, sigma);
                    assert!((&s - &fd).norm() <= 1e-6 * s.norm().max(1.0), "gauss {x:?}");
                }
            }
        }
    }

    #[test]
    fn standard_normal_log_density_at_origin() {
        let m = GaussianMixtureScore::new(vec![1.0], vec![v(&[0.0, 0.0])], vec![1.0]).unwrap();
        let expected = -(2.0 * PI).ln();
        assert!((m.log_density(&v(&[0.0, 0.0]), 0.0) - expected).abs() < 1e-12);
        assert!((expected + 1.837877).abs() < 1e-6);
    }

    #[test]
    fn mixture_density_integrates_to_one() {
        let m = GaussianMixtureScore::new(
            vec![0.3, 0.7],
            vec![v(&[1.0, 0.5]), v(&[-0.8, -0.2])],
            vec![0.4, 0.9],
        )
        .unwrap();
        let n = 600;
        let h = 12.0 / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = v(&[-6.0 + (i as f64 + 0.5) * h, -6.0 + (j as f64 + 0.5) * h]);
                total += m.log_density(&x, 0.0).exp() * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn log_density_is_translation_invariant() {
        let m = two_bumps(0.5);
        let shift = v(&[3.25, -1.5]);
        let shifted = GaussianMixtureScore::new(
            m.weights().to_vec(),
            m.means().iter().map(|mu| mu + &shift).collect(),
            m.variances().to_vec(),
        )
        .unwrap();
        let x = v(&[0.1, 0.9]);
        let a = m.log_density(&x, 0.4);
        let b = shifted.log_density(&(&x + &shift), 0.4);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn no_nan_far_from_the_data() {
        let moons = TwoMoonsScore::default();
        for x in [v(&[1e6, -1e6]), v(&[-1e6, 3.0]), v(&[0.0, 1e6])] {
            let s = moons.score(&x, 0.0);
            assert!(s.is_finite(), "{s:?}");
            assert!(moons.mixture().log_density(&x, 0.0).is_finite());
        }
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(GaussianMixtureScore::new(
            vec![0.5, 0.6],
            vec![v(&[0.0]), v(&[1.0])],
            vec![1.0, 1.0]
        )
        .is_err());
        assert!(GaussianMixtureScore::new(vec![1.0], vec![v(&[0.0])], vec![0.0]).is_err());
    }

    #[test]
    fn two_moons_weights_sum_to_one() {
        let m = TwoMoonsScore::default();
        assert_eq!(m.mixture().n_components(), 32);
        assert!((m.mixture().weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
