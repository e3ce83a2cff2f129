use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::chain::{hmc_move, mh_step, ChainState, ChainStats};
use super::schedule::AnnealingSchedule;
use crate::error::{Error, Result};
use crate::forward_models::GaussianLikelihood;
use crate::numerics::{write_tensor, RngStream, Tensor, DEFAULT_SIMPSON_NODES};
use crate::score_models::ScoreModel;

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub schedule: AnnealingSchedule,
    pub leapfrog_steps: usize,
    pub quad_nodes: usize,
    /// Metropolis–Hastings correction; off gives plain annealed HMC.
    pub mh: bool,
    /// Apply one expected-denoised-sample step at the final temperature.
    pub eds: bool,
    pub sigma_floor: f64,
    /// Keep every `record_every`-th state of the final temperature block
    /// (0 keeps none).
    pub record_every: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            schedule: AnnealingSchedule::default(),
            leapfrog_steps: 5,
            quad_nodes: DEFAULT_SIMPSON_NODES,
            mh: true,
            eds: true,
            sigma_floor: 1e-3,
            record_every: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.leapfrog_steps < 1 {
            return Err(Error::Param("leapfrog_steps must be >= 1".into()));
        }
        if self.quad_nodes < 3 {
            return Err(Error::Param("quad_nodes must be >= 3".into()));
        }
        if !(self.sigma_floor >= 0.0) {
            return Err(Error::Param("sigma_floor must be >= 0".into()));
        }
        Ok(())
    }
}

/// Prior score at σ plus the σ-tempered likelihood score.
#[derive(Clone, Copy)]
pub struct TemperedPosterior<'a> {
    pub prior: &'a dyn ScoreModel,
    pub likelihood: Option<&'a GaussianLikelihood>,
}

impl<'a> TemperedPosterior<'a> {
    pub fn new(prior: &'a dyn ScoreModel, likelihood: Option<&'a GaussianLikelihood>) -> Self {
        TemperedPosterior { prior, likelihood }
    }

    pub fn try_score(&self, x: &Tensor, sigma: f64) -> Result<Tensor> {
        let mut s = self.prior.score(x, sigma);
        if let Some(lik) = self.likelihood {
            s.add_scaled(1.0, &lik.score(x, sigma)?);
        }
        Ok(s)
    }
}

impl ScoreModel for TemperedPosterior<'_> {
    /// Panics on a shape mismatch; [`annealed_sample`] checks shapes up front.
    fn score(&self, x: &Tensor, sigma: f64) -> Tensor {
        self.try_score(x, sigma).expect("posterior score")
    }
    fn dim(&self) -> usize {
        self.prior.dim()
    }
}

/// `x + σ² ∇ log p_σ(x)`.
pub fn expected_denoised_sample(x: &Tensor, sigma: f64, score: &dyn ScoreModel) -> Result<Tensor> {
    if !(sigma >= 0.0) {
        return Err(Error::Param(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    Ok(x.axpy(sigma * sigma, &score.score(x, sigma)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainDiagnostics {
    pub stats: ChainStats,
    pub final_sigma: f64,
}

#[derive(Clone, Debug)]
pub struct PosteriorSampleSet {
    /// Returned samples (after EDS when enabled).
    pub samples: Vec<Tensor>,
    /// Chain positions at the last temperature, before any denoising step.
    pub final_states: Vec<Tensor>,
    /// Thinned states from each chain's final temperature block.
    pub trace: Vec<Vec<Tensor>>,
    pub diagnostics: Vec<ChainDiagnostics>,
    pub config: SamplerConfig,
    pub seed: u64,
    pub likelihood_approximate: bool,
}

impl PosteriorSampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples stacked as `n_chains × signal`.
    pub fn stacked(&self) -> Result<Tensor> {
        Tensor::stack(&self.samples)
    }

    pub fn divergence_rate(&self) -> f64 {
        let (d, p) = self.diagnostics.iter().fold((0, 0), |(d, p), c| {
            (d + c.stats.divergent, p + c.stats.proposed)
        });
        if p == 0 {
            0.0
        } else {
            d as f64 / p as f64
        }
    }

    /// Plain-text per-chain diagnostics.
    pub fn diagnostics_text(&self) -> String {
        let c = &self.config;
        let s = &c.schedule;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# chains={} seed={} mh={} eds={} leapfrog_steps={} quad_nodes={} sigma_floor={}",
            self.len(),
            self.seed,
            c.mh,
            c.eds,
            c.leapfrog_steps,
            c.quad_nodes,
            c.sigma_floor
        );
        let _ = writeln!(
            out,
            "# schedule sigma_init={} gamma={} epsilon={} exponent={} sigma_final={} steps_per_temperature={} final_steps={} levels={}",
            s.sigma_init,
            s.gamma,
            s.epsilon,
            s.exponent,
            s.sigma_final,
            s.steps_per_temperature,
            s.final_steps,
            s.n_levels(c.sigma_floor)
        );
        if self.likelihood_approximate {
            let _ = writeln!(
                out,
                "# note: tempered likelihood is approximate for this operator"
            );
        }
        let rate = self.divergence_rate();
        if rate > 0.5 {
            let _ = writeln!(out, "# warning: divergence rate {rate:.3} exceeds 0.5");
        }
        let _ = writeln!(
            out,
            "chain,accepted,proposed,divergent,acceptance_rate,final_sigma"
        );
        for (i, d) in self.diagnostics.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{},{},{},{:.6},{}",
                d.stats.accepted,
                d.stats.proposed,
                d.stats.divergent,
                d.stats.acceptance_rate(),
                d.final_sigma
            );
        }
        out
    }

    /// Write `samples` as TNSR and the diagnostics table next to it.
    pub fn save(&self, samples_path: &Path, diagnostics_path: &Path) -> Result<()> {
        write_tensor(samples_path, &self.stacked()?)?;
        fs::write(diagnostics_path, self.diagnostics_text())
            .map_err(|e| Error::io(diagnostics_path, e))
    }
}

/// Run `n_chains` independent annealed chains against the tempered posterior.
///
/// Chain `k` uses random stream `(seed, k)` and starts at
/// `init + σ_init ξ`. Without `init`, the start is `Aᵀy` when a likelihood is
/// given and zero otherwise.
pub fn annealed_sample(
    prior: &dyn ScoreModel,
    likelihood: Option<&GaussianLikelihood>,
    cfg: &SamplerConfig,
    n_chains: usize,
    init: Option<&Tensor>,
    seed: u64,
) -> Result<PosteriorSampleSet> {
    cfg.validate()?;
    if n_chains < 1 {
        return Err(Error::Param("n_chains must be >= 1".into()));
    }
    let init = match (init, likelihood) {
        (Some(x), _) => x.clone(),
        (None, Some(lik)) => lik.operator().adjoint(lik.measurement())?,
        (None, None) => Tensor::zeros(&[prior.dim()]),
    };
    if init.len() != prior.dim() {
        return Err(Error::Shape(format!(
            "initial state has {} entries, prior expects {}",
            init.len(),
            prior.dim()
        )));
    }
    if let Some(lik) = likelihood {
        if init.shape() != lik.operator().input_shape() {
            return Err(Error::Shape(format!(
                "initial state shape {:?} does not match operator input {:?}",
                init.shape(),
                lik.operator().input_shape()
            )));
        }
    }
    let posterior = TemperedPosterior::new(prior, likelihood);
    let levels = cfg.schedule.levels(cfg.sigma_floor);

    let results: Vec<Result<ChainOutput>> = (0..n_chains)
        .into_par_iter()
        .map(|k| run_chain(&posterior, cfg, &levels, &init, seed, k as u64))
        .collect();

    let mut samples = Vec::with_capacity(n_chains);
    let mut final_states = Vec::with_capacity(n_chains);
    let mut trace = Vec::with_capacity(n_chains);
    let mut diagnostics = Vec::with_capacity(n_chains);
    for r in results {
        let c = r?;
        samples.push(c.sample);
        final_states.push(c.final_state);
        trace.push(c.trace);
        diagnostics.push(c.diagnostics);
    }
    Ok(PosteriorSampleSet {
        samples,
        final_states,
        trace,
        diagnostics,
        config: cfg.clone(),
        seed,
        likelihood_approximate: likelihood.is_some_and(|l| l.is_approximate()),
    })
}

struct ChainOutput {
    sample: Tensor,
    final_state: Tensor,
    trace: Vec<Tensor>,
    diagnostics: ChainDiagnostics,
}

fn run_chain(
    posterior: &TemperedPosterior<'_>,
    cfg: &SamplerConfig,
    levels: &[(f64, f64)],
    init: &Tensor,
    seed: u64,
    chain: u64,
) -> Result<ChainOutput> {
    let mut rng = RngStream::new(seed, chain);
    let sigma0 = levels[0].0;
    let noise = rng.gaussian(init.shape());
    let mut st = ChainState::new(init.axpy(cfg.schedule.sigma_init, &noise), sigma0, rng);
    let last = levels.len() - 1;
    let mut trace = Vec::new();
    for (i, &(sigma, alpha)) in levels.iter().enumerate() {
        st.set_sigma(sigma);
        let score = |x: &Tensor| posterior.score(x, sigma);
        let steps = cfg.schedule.steps_per_temperature
            + if i == last {
                cfg.schedule.final_steps
            } else {
                0
            };
        for j in 1..=steps {
            if cfg.mh {
                mh_step(&mut st, score, alpha, cfg.leapfrog_steps, cfg.quad_nodes)?;
            } else {
                hmc_move(&mut st, score, alpha, cfg.leapfrog_steps)?;
            }
            if i == last && cfg.record_every > 0 && j % cfg.record_every == 0 {
                trace.push(st.x.clone());
            }
        }
    }
    let final_sigma = st.sigma;
    let out = if cfg.eds {
        expected_denoised_sample(&st.x, final_sigma, posterior)?
    } else {
        st.x.clone()
    };
    Ok(ChainOutput {
        sample: out,
        final_state: st.x,
        trace,
        diagnostics: ChainDiagnostics {
            stats: st.stats,
            final_sigma,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score_models::IsotropicGaussianScore;

    #[test]
    fn eds_examples() {
        let prior = IsotropicGaussianScore::standard(2);
        let x = Tensor::from_vec(vec![2.0, 0.0]);
        assert_eq!(expected_denoised_sample(&x, 0.0, &prior).unwrap(), x);
        let d = expected_denoised_sample(&x, 1.0, &prior).unwrap();
        assert!((&d - &Tensor::from_vec(vec![1.0, 0.0])).max_abs() < 1e-15);
        let mean = Tensor::zeros(&[2]);
        assert_eq!(expected_denoised_sample(&mean, 0.7, &prior).unwrap(), mean);
    }

    fn quick_cfg() -> SamplerConfig {
        SamplerConfig {
            schedule: AnnealingSchedule {
                gamma: 0.9,
                epsilon: 0.5,
                ..AnnealingSchedule::default()
            },
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn reruns_are_bit_identical() {
        let prior = IsotropicGaussianScore::standard(3);
        let a = annealed_sample(&prior, None, &quick_cfg(), 2, None, 11).unwrap();
        let b = annealed_sample(&prior, None, &quick_cfg(), 2, None, 11).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.diagnostics, b.diagnostics);
        assert_ne!(a.samples[0], a.samples[1]);
    }

    #[test]
    fn diagnostics_have_one_row_per_chain() {
        let prior = IsotropicGaussianScore::standard(2);
        let set = annealed_sample(&prior, None, &quick_cfg(), 3, None, 1).unwrap();
        let text = set.diagnostics_text();
        let rows = text.lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(rows, 4);
        assert!(set.diagnostics.iter().all(|d| d.stats.proposed > 0));
        assert!(set.trace.iter().all(Vec::is_empty));
    }

    #[test]
    fn final_block_is_recorded_with_thinning() {
        let prior = IsotropicGaussianScore::standard(2);
        let mut cfg = quick_cfg();
        cfg.schedule.final_steps = 7;
        cfg.record_every = 5;
        let set = annealed_sample(&prior, None, &cfg, 2, None, 1).unwrap();
        // 3 + 7 steps at the last level, every 5th kept.
        assert!(set.trace.iter().all(|t| t.len() == 2));
        assert_eq!(set.trace[0][1], set.final_states[0]);
    }

    #[test]
    fn rejects_mismatched_initial_state() {
        let prior = IsotropicGaussianScore::standard(2);
        let bad = Tensor::zeros(&[3]);
        assert!(matches!(
            annealed_sample(&prior, None, &quick_cfg(), 1, Some(&bad), 0),
            Err(Error::Shape(_))
        ));
        assert!(annealed_sample(&prior, None, &quick_cfg(), 0, None, 0).is_err());
    }
}
