use crate::error::{Error, Result};
use crate::numerics::{RngStream, Tensor};

/// Random Cartesian column undersampling with a fully sampled low-frequency band.
#[derive(Clone, Debug, PartialEq)]
pub struct CartesianMaskSpec {
    pub acceleration: usize,
    pub center_fraction: f64,
    pub seed: u64,
}

impl Default for CartesianMaskSpec {
    fn default() -> Self {
        CartesianMaskSpec {
            acceleration: 4,
            center_fraction: 0.08,
            seed: 0,
        }
    }
}

impl CartesianMaskSpec {
    pub fn validate(&self, width: usize) -> Result<()> {
        if width < 8 {
            return Err(Error::Param(format!(
                "mask width must be >= 8, got {width}"
            )));
        }
        if self.acceleration < 1 {
            return Err(Error::Param("acceleration must be >= 1".into()));
        }
        let cf = self.center_fraction;
        if !(0.0..1.0).contains(&cf) {
            return Err(Error::Param(format!(
                "center_fraction must be in [0, 1), got {cf}"
            )));
        }
        if cf > 1.0 / self.acceleration as f64 {
            return Err(Error::Param(format!(
                "center_fraction {cf} exceeds the sampled fraction 1/{}",
                self.acceleration
            )));
        }
        Ok(())
    }

    /// Number of always-kept low-frequency columns.
    pub fn center_columns(&self, width: usize) -> usize {
        let n = (self.center_fraction * width as f64).floor() as usize;
        if self.center_fraction > 0.0 {
            n.max(1)
        } else {
            n
        }
    }

    /// Mask drawn from this spec's own seed.
    pub fn build(&self, width: usize) -> Result<Tensor> {
        make_mask(self, width, &mut RngStream::new(self.seed, 0))
    }
}

/// Length-`width` 0/1 column mask in unshifted FFT order, so the kept
/// centre band wraps around column 0.
pub fn make_mask(spec: &CartesianMaskSpec, width: usize, rng: &mut RngStream) -> Result<Tensor> {
    spec.validate(width)?;
    let n_center = spec.center_columns(width);
    let mut mask = vec![0.0; width];
    let lo = n_center / 2;
    for k in 0..n_center {
        let col = (k as isize - lo as isize).rem_euclid(width as isize) as usize;
        mask[col] = 1.0;
    }
    let target = width as f64 / spec.acceleration as f64;
    let p = ((target - n_center as f64) / (width - n_center) as f64).clamp(0.0, 1.0);
    for m in mask.iter_mut() {
        // One draw per column keeps the stream layout independent of the band.
        let u = rng.uniform();
        if *m == 0.0 && u < p {
            *m = 1.0;
        }
    }
    Ok(Tensor::from_vec(mask))
}
