use crate::error::{Error, Result};
use crate::numerics::{simpson_line_integral_with_ends, RngStream, Tensor};

/// Node count used once a proposal moves further than one unit per coordinate (RMS).
pub const LONG_STEP_QUAD_NODES: usize = 9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ChainStats {
    pub proposed: u64,
    pub accepted: u64,
    pub divergent: u64,
}

impl ChainStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// One chain's position, last momentum, temperature and private random stream.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub x: Tensor,
    pub m: Tensor,
    pub sigma: f64,
    pub rng: RngStream,
    pub stats: ChainStats,
    grad: Option<Tensor>,
}

impl ChainState {
    pub fn new(x: Tensor, sigma: f64, rng: RngStream) -> Self {
        let m = Tensor::zeros(x.shape());
        ChainState {
            x,
            m,
            sigma,
            rng,
            stats: ChainStats::default(),
            grad: None,
        }
    }

    /// Move to a new temperature, dropping the cached score.
    pub fn set_sigma(&mut self, sigma: f64) {
        if sigma != self.sigma {
            self.sigma = sigma;
            self.grad = None;
        }
    }

    fn grad<F: Fn(&Tensor) -> Tensor>(&mut self, score: &F) -> Tensor {
        match &self.grad {
            Some(g) => g.clone(),
            None => {
                let g = score(&self.x);
                self.grad = Some(g.clone());
                g
            }
        }
    }
}

/// End point of a leapfrog trajectory.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub x: Tensor,
    pub m: Tensor,
    /// Score at `x`.
    pub grad: Tensor,
    pub divergent: bool,
}

/// `n_steps` leapfrog steps with unit mass, starting from `(x, m)` with the
/// score `grad` already evaluated at `x`. Stops early when the score or
/// position becomes non-finite and flags the trajectory as divergent.
pub fn leapfrog<F>(
    x: &Tensor,
    m: &Tensor,
    grad: &Tensor,
    score: F,
    alpha: f64,
    n_steps: usize,
) -> Result<Trajectory>
where
    F: Fn(&Tensor) -> Tensor,
{
    if !(alpha > 0.0) {
        return Err(Error::Param(format!(
            "leapfrog step must be > 0, got {alpha}"
        )));
    }
    if n_steps < 1 {
        return Err(Error::Param("leapfrog needs at least one step".into()));
    }
    x.check_same_shape(m)?;
    let half = 0.5 * alpha;
    let mut x = x.clone();
    let mut m = m.clone();
    let mut g = grad.clone();
    for _ in 0..n_steps {
        m.add_scaled(half, &g);
        x.add_scaled(alpha, &m);
        g = score(&x);
        if !g.is_finite() || !x.is_finite() {
            return Ok(Trajectory {
                x,
                m,
                grad: g,
                divergent: true,
            });
        }
        m.add_scaled(half, &g);
    }
    Ok(Trajectory {
        x,
        m,
        grad: g,
        divergent: false,
    })
}

/// `log p(x_to) − log p(x_from)` from the score alone, integrated along the
/// straight segment.
pub fn path_integral_logdiff<F>(
    score: F,
    x_from: &Tensor,
    x_to: &Tensor,
    n_points: usize,
) -> Result<f64>
where
    F: FnMut(&Tensor) -> Tensor,
{
    simpson_line_integral_with_ends(score, x_from, x_to, n_points, None, None)
}

/// Outcome of a single Metropolis–Hastings step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MhOutcome {
    pub accepted: bool,
    pub divergent: bool,
    /// `Δlog p − ΔK`; NaN for divergent proposals.
    pub log_ratio: f64,
}

fn quad_nodes_for(step: &Tensor, base: usize) -> usize {
    let rms = (step.norm_sq() / step.len() as f64).sqrt();
    if rms > 1.0 {
        base.max(LONG_STEP_QUAD_NODES)
    } else {
        base
    }
}

/// One HMC transition at the chain's current temperature.
///
/// Draws a fresh momentum, then always one uniform, so the stream layout is
/// identical whatever the outcome.
pub fn mh_step<F>(
    state: &mut ChainState,
    score: F,
    alpha: f64,
    n_steps: usize,
    n_quad: usize,
) -> Result<MhOutcome>
where
    F: Fn(&Tensor) -> Tensor,
{
    let m0 = state.rng.gaussian(state.x.shape());
    let u = state.rng.uniform();
    let g0 = state.grad(&score);
    state.stats.proposed += 1;

    let traj = leapfrog(&state.x, &m0, &g0, &score, alpha, n_steps)?;
    let reject_divergent = |state: &mut ChainState, m0: Tensor| {
        state.m = m0;
        state.stats.divergent += 1;
        MhOutcome {
            accepted: false,
            divergent: true,
            log_ratio: f64::NAN,
        }
    };
    if traj.divergent || !g0.is_finite() {
        return Ok(reject_divergent(state, m0));
    }
    let nodes = quad_nodes_for(&(&traj.x - &state.x), n_quad);
    let dlogp = match simpson_line_integral_with_ends(
        &score,
        &state.x,
        &traj.x,
        nodes,
        Some(&g0),
        Some(&traj.grad),
    ) {
        Ok(v) => v,
        Err(Error::Numerical(_)) => return Ok(reject_divergent(state, m0)),
        Err(e) => return Err(e),
    };
    let dk = 0.5 * (traj.m.norm_sq() - m0.norm_sq());
    let log_ratio = dlogp - dk;
    let accepted = log_ratio >= 0.0 || u < log_ratio.exp();
    if accepted {
        state.x = traj.x;
        state.m = traj.m;
        state.grad = Some(traj.grad);
        state.stats.accepted += 1;
    } else {
        state.m = m0;
    }
    Ok(MhOutcome {
        accepted,
        divergent: false,
        log_ratio,
    })
}

/// Unadjusted HMC move: the leapfrog end point is always taken unless it diverged.
pub fn hmc_move<F>(state: &mut ChainState, score: F, alpha: f64, n_steps: usize) -> Result<bool>
where
    F: Fn(&Tensor) -> Tensor,
{
    let m0 = state.rng.gaussian(state.x.shape());
    let g0 = state.grad(&score);
    state.stats.proposed += 1;
    let traj = leapfrog(&state.x, &m0, &g0, &score, alpha, n_steps)?;
    if traj.divergent {
        state.stats.divergent += 1;
        state.m = m0;
        return Ok(false);
    }
    state.x = traj.x;
    state.m = traj.m;
    state.grad = Some(traj.grad);
    state.stats.accepted += 1;
    Ok(true)
}
