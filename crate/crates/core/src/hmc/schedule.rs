use crate::error::{Error, Result};

/// Geometric temperature ladder `σ_i = σ_init γ^i` with step sizes
/// `α_i = ε (σ_i/σ_init)^p`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnealingSchedule {
    pub sigma_init: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub exponent: f64,
    pub sigma_final: f64,
    pub steps_per_temperature: usize,
    /// Extra MH steps appended at the last temperature.
    pub final_steps: usize,
}

impl Default for AnnealingSchedule {
    fn default() -> Self {
        AnnealingSchedule {
            sigma_init: 1.0,
            gamma: 0.995,
            epsilon: 0.1,
            exponent: 1.5,
            sigma_final: 0.01,
            steps_per_temperature: 3,
            final_steps: 0,
        }
    }
}

impl AnnealingSchedule {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Param(m));
        if !(self.sigma_init > 0.0 && self.sigma_init.is_finite()) {
            return bad(format!("sigma_init must be > 0, got {}", self.sigma_init));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must be in (0, 1), got {}", self.gamma));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if !self.exponent.is_finite() || self.exponent <= 0.0 {
            return bad(format!("exponent must be > 0, got {}", self.exponent));
        }
        if !(self.sigma_final >= 0.0 && self.sigma_final <= self.sigma_init) {
            return bad(format!(
                "sigma_final must be in [0, sigma_init], got {}",
                self.sigma_final
            ));
        }
        if self.steps_per_temperature < 1 {
            return bad("steps_per_temperature must be >= 1".into());
        }
        Ok(())
    }

    /// Number of temperature levels, `T + 1` with `γ^T ≈ σ_final/σ_init`.
    /// A zero `sigma_final` is resolved against `floor`.
    pub fn n_levels(&self, floor: f64) -> usize {
        let target = self.sigma_final.max(floor);
        if target <= 0.0 {
            return 1;
        }
        let t = ((target / self.sigma_init).ln() / self.gamma.ln()).round();
        t.max(0.0) as usize + 1
    }

    pub fn sigma(&self, i: usize) -> f64 {
        self.sigma_init * self.gamma.powi(i as i32)
    }

    pub fn alpha(&self, i: usize) -> f64 {
        self.epsilon * (self.sigma(i) / self.sigma_init).powf(self.exponent)
    }

    /// `(σ_i, α_i)` for every level, with temperatures below `floor`
    /// clamped to it.
    pub fn levels(&self, floor: f64) -> Vec<(f64, f64)> {
        let n = self.n_levels(floor);
        let mut clamped = false;
        let out = (0..n)
            .map(|i| {
                let s = self.sigma(i);
                if s < floor {
                    clamped = true;
                    (floor, self.alpha(i))
                } else {
                    (s, self.alpha(i))
                }
            })
            .collect();
        if clamped {
            log::warn!("annealing ladder reaches below sigma floor {floor}; clamped");
        }
        out
    }
}
