//! Annealed Hamiltonian Monte Carlo with a score-only Metropolis–Hastings test.

mod chain;
mod sampler;
mod schedule;

pub use chain::{
    hmc_move, leapfrog, mh_step, path_integral_logdiff, ChainState, ChainStats, MhOutcome,
    Trajectory, LONG_STEP_QUAD_NODES,
};
pub use sampler::{
    annealed_sample, expected_denoised_sample, ChainDiagnostics, PosteriorSampleSet, SamplerConfig,
    TemperedPosterior,
};
pub use schedule::AnnealingSchedule;
