use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{RngStream, Tensor};

/// Random overlapping ellipses with additive intensities, clipped to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub size: usize,
    pub min_ellipses: usize,
    pub max_ellipses: usize,
    pub intensity_min: f64,
    pub intensity_max: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            size: 32,
            min_ellipses: 3,
            max_ellipses: 7,
            intensity_min: 0.2,
            intensity_max: 0.8,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.size.is_power_of_two() || self.size < 2 {
            return Err(Error::Sizing(format!(
                "phantom size must be a power of two >= 2, got {}",
                self.size
            )));
        }
        if self.min_ellipses > self.max_ellipses {
            return Err(Error::Param("min_ellipses exceeds max_ellipses".into()));
        }
        let (lo, hi) = (self.intensity_min, self.intensity_max);
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Param(format!("bad intensity range [{lo}, {hi}]")));
        }
        Ok(())
    }

    /// Phantom number `index`, drawn from stream `(seed, index)`.
    pub fn phantom(&self, index: u64) -> Tensor {
        let mut rng = RngStream::new(self.seed, index);
        let n = self.size;
        let count = rng.int_inclusive(self.min_ellipses, self.max_ellipses);
        let mut img = vec![0.0; n * n];
        for _ in 0..count {
            let cx = rng.uniform_range(-0.6, 0.6);
            let cy = rng.uniform_range(-0.6, 0.6);
            let a = rng.uniform_range(0.1, 0.6);
            let b = rng.uniform_range(0.1, 0.6);
            let theta = rng.uniform_range(0.0, std::f64::consts::PI);
            let value = rng.uniform_range(self.intensity_min, self.intensity_max);
            let (s, c) = theta.sin_cos();
            for r in 0..n {
                let y = 2.0 * (r as f64 + 0.5) / n as f64 - 1.0 - cy;
                for col in 0..n {
                    let x = 2.0 * (col as f64 + 0.5) / n as f64 - 1.0 - cx;
                    let u = (x * c + y * s) / a;
                    let v = (-x * s + y * c) / b;
                    if u * u + v * v <= 1.0 {
                        img[r * n + col] += value;
                    }
                }
            }
        }
        for p in &mut img {
            *p = p.clamp(0.0, 1.0);
        }
        Tensor::new(vec![n, n], img).expect("phantom shape")
    }
}

/// `count × size × size` batch; phantom `i` depends only on `(seed, i)`.
pub fn make_phantoms(spec: &PhantomSpec, count: usize) -> Result<Tensor> {
    spec.validate()?;
    if count < 1 {
        return Err(Error::Param("phantom count must be >= 1".into()));
    }
    let images: Vec<Tensor> = (0..count as u64)
        .into_par_iter()
        .map(|i| spec.phantom(i))
        .collect();
    Tensor::stack(&images)
}
