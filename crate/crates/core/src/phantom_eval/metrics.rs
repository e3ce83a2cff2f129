use crate::error::{Error, Result};
use crate::hmc::PosteriorSampleSet;
use crate::numerics::{packed_magnitude, Tensor};

pub const PSNR_CAP_DB: f64 = 160.0;

/// `10 log10(peak² / MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(reference: &Tensor, estimate: &Tensor, peak: f64) -> Result<f64> {
    reference.check_same_shape(estimate)?;
    if !(peak > 0.0) {
        return Err(Error::Param(format!("PSNR peak must be > 0, got {peak}")));
    }
    let mse = (reference - estimate).norm_sq() / reference.len() as f64;
    if mse < peak * peak * 1e-16 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

/// Pixelwise mean and unbiased standard deviation across samples.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyMap {
    pub mean: Tensor,
    pub std: Tensor,
    pub n_samples: usize,
}

impl UncertaintyMap {
    pub fn from_samples(samples: &[Tensor]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Param(format!(
                "uncertainty map needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        let n = samples.len() as f64;
        let mut sum = Tensor::zeros(samples[0].shape());
        for s in samples {
            sum.check_same_shape(s)?;
            sum.add_scaled(1.0, s);
        }
        let mean = sum.scale(1.0 / n);
        let mut ss = Tensor::zeros(mean.shape());
        for s in samples {
            let d = s - &mean;
            for (acc, v) in ss.data_mut().iter_mut().zip(d.data()) {
                *acc += v * v;
            }
        }
        let std = ss.map(|v| (v / (n - 1.0)).sqrt());
        Ok(UncertaintyMap {
            mean,
            std,
            n_samples: samples.len(),
        })
    }
}

pub fn uncertainty_map(samples: &PosteriorSampleSet) -> Result<UncertaintyMap> {
    UncertaintyMap::from_samples(&samples.samples)
}

/// Magnitude-image PSNRs of an MRI reconstruction against a real ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct MriMetrics {
    pub per_sample: Vec<f64>,
    pub mean_of_samples: f64,
    pub zero_filled: f64,
}

impl MriMetrics {
    pub fn mean_per_sample(&self) -> f64 {
        self.per_sample.iter().sum::<f64>() / self.per_sample.len() as f64
    }
}

/// PSNR of each packed complex sample, of their mean, and of the zero-filled
/// image, all as magnitudes against `truth` with peak `max(truth)`.
pub fn mri_metrics(truth: &Tensor, samples: &[Tensor], zero_filled: &Tensor) -> Result<MriMetrics> {
    if samples.is_empty() {
        return Err(Error::Param("no samples to evaluate".into()));
    }
    let peak = truth
        .data()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let score = |packed: &Tensor| psnr(truth, &packed_magnitude(packed)?, peak);
    let per_sample = samples.iter().map(score).collect::<Result<Vec<_>>>()?;
    let mut mean = Tensor::zeros(samples[0].shape());
    for s in samples {
        mean.add_scaled(1.0 / samples.len() as f64, s);
    }
    Ok(MriMetrics {
        per_sample,
        mean_of_samples: score(&mean)?,
        zero_filled: score(zero_filled)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward_models::{
        simulate_measurement, zero_filled, CartesianMaskSpec, ForwardOperator, GaussianLikelihood,
        MaskedFourierOperator,
    };
    use crate::numerics::{ComplexImage, RngStream};
    use crate::phantom_eval::{make_phantoms, PhantomSpec};
    use std::sync::Arc;

    #[test]
    fn identical_images_hit_the_cap() {
        let x = Tensor::filled(&[4, 4], 0.3);
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn constant_offset_gives_twenty_db() {
        let x = Tensor::zeros(&[8, 8]);
        let y = Tensor::filled(&[8, 8], 0.1);
        assert!((psnr(&x, &y, 1.0).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_checks_its_inputs() {
        let x = Tensor::zeros(&[2, 2]);
        assert!(matches!(
            psnr(&x, &Tensor::zeros(&[4]), 1.0),
            Err(Error::Shape(_))
        ));
        assert!(psnr(&x, &x, 0.0).is_err());
    }

    #[test]
    fn identical_samples_have_zero_spread() {
        let s = Tensor::filled(&[3, 3], 0.7);
        let m = UncertaintyMap::from_samples(&[s.clone(), s.clone(), s.clone()]).unwrap();
        assert!(m.std.max_abs() < 1e-15);
        assert!((&m.mean - &s).max_abs() < 1e-15);
    }

    #[test]
    fn two_point_std() {
        let c = 0.25;
        let a = Tensor::from_vec(vec![1.0, 5.0]);
        let b = Tensor::from_vec(vec![1.0, 5.0 + 2.0 * c]);
        let m = UncertaintyMap::from_samples(&[a, b]).unwrap();
        assert!((m.std.data()[1] - c * 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.std.data()[0], 0.0);
        assert!(UncertaintyMap::from_samples(&[Tensor::zeros(&[2])]).is_err());
    }

    #[test]
    fn mean_map_is_the_arithmetic_mean() {
        let mut rng = RngStream::new(1, 0);
        let xs: Vec<Tensor> = (0..5).map(|_| rng.gaussian(&[4])).collect();
        let m = UncertaintyMap::from_samples(&xs).unwrap();
        for i in 0..4 {
            let direct: f64 = xs.iter().map(|x| x.data()[i]).sum::<f64>() / 5.0;
            assert!((m.mean.data()[i] - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn undersampling_lowers_zero_filled_psnr() {
        let truth = make_phantoms(&PhantomSpec::default(), 1).unwrap().outer(0);
        let packed = ComplexImage::from_real(truth.clone()).unwrap().pack();
        let run = |acceleration: usize, cf: f64| {
            let spec = CartesianMaskSpec {
                acceleration,
                center_fraction: cf,
                seed: 4,
            };
            let op: Arc<dyn ForwardOperator> = Arc::new(
                MaskedFourierOperator::from_columns(&spec.build(32).unwrap(), 32).unwrap(),
            );
            let y =
                simulate_measurement(op.as_ref(), &packed, 0.0, &mut RngStream::new(0, 0)).unwrap();
            let lik = GaussianLikelihood::new(op, y, 0.1).unwrap();
            let zf = zero_filled(&lik).unwrap().pack();
            mri_metrics(&truth, std::slice::from_ref(&zf), &zf)
                .unwrap()
                .zero_filled
        };
        let full = run(1, 0.0);
        let accelerated = run(4, 0.08);
        assert!(accelerated < full, "{accelerated} vs {full}");
        assert_eq!(full, PSNR_CAP_DB);
    }
}
