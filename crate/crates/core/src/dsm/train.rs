use rayon::prelude::*;

use super::network::{Gradients, ScoreNetwork};
use super::spectral::{project_spectral_norm, PowerIterationState};
use crate::error::{Error, Result};
use crate::numerics::{RngStream, Tensor};

/// Samples per gradient chunk. Fixed so the reduction order does not depend
/// on the number of worker threads.
const GRAD_CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Std `s` of the signed training noise level `σ_s ~ N(0, s²)`.
    pub noise_scale: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub sigma_floor: f64,
    pub seed: u64,
    pub spectral_target: f64,
    /// Power iterations per optimizer step (vectors persist across steps).
    pub spectral_iters: usize,
    /// Rescale the dataset to unit max magnitude before training.
    pub normalize_data: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            noise_scale: 1.0,
            batch_size: 64,
            steps: 1000,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            sigma_floor: super::network::DEFAULT_SIGMA_FLOOR,
            seed: 0,
            spectral_target: 2.0,
            spectral_iters: 2,
            normalize_data: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("noise_scale", self.noise_scale),
            ("adam_epsilon", self.adam_epsilon),
            ("sigma_floor", self.sigma_floor),
            ("spectral_target", self.spectral_target),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Param(format!("train.{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Param(format!(
                    "train.{name} must be in [0, 1), got {v}"
                )));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Param("train.batch_size must be >= 1".into()));
        }
        if self.spectral_iters == 0 {
            return Err(Error::Param("train.spectral_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Noise draws for one DSM batch: `u ~ N(0, I)` and signed `σ_s ~ N(0, s²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DsmNoise {
    pub u: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
}

impl DsmNoise {
    pub fn draw(rng: &mut RngStream, batch: usize, dim: usize, s: f64) -> Self {
        let sigma = (0..batch).map(|_| s * rng.normal()).collect();
        let u = (0..batch)
            .map(|_| (0..dim).map(|_| rng.normal()).collect())
            .collect();
        DsmNoise { u, sigma }
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }
}

fn batch_rows(net: &ScoreNetwork, batch: &Tensor) -> Result<Vec<Vec<f64>>> {
    let dim = net_dim(net);
    if batch.rank() < 2 || batch.len() != batch.outer_len() * dim {
        return Err(Error::Shape(format!(
            "batch {:?} does not hold signals of {:?}",
            batch.shape(),
            net.signal_shape()
        )));
    }
    let c = net.data_scale();
    Ok(batch
        .data()
        .chunks_exact(dim)
        .map(|r| r.iter().map(|v| v / c).collect())
        .collect())
}

fn net_dim(net: &ScoreNetwork) -> usize {
    net.signal_shape().iter().product()
}

/// Mean DSM loss over `rows` with fixed noise, plus parameter gradients.
/// Rows are in the network's unit-scaled coordinates.
fn loss_and_grad(net: &ScoreNetwork, rows: &[Vec<f64>], noise: &DsmNoise) -> (f64, Gradients) {
    let weight = 1.0 / rows.len() as f64;
    let chunks: Vec<(f64, Gradients)> = (0..rows.len())
        .collect::<Vec<_>>()
        .par_chunks(GRAD_CHUNK)
        .map(|idx| {
            let mut g = Gradients::zeros_like(net);
            let mut loss = 0.0;
            for &i in idx {
                loss += net.dsm_sample(&rows[i], &noise.u[i], noise.sigma[i], weight, Some(&mut g));
            }
            (loss, g)
        })
        .collect();
    let mut total = 0.0;
    let mut grads = Gradients::zeros_like(net);
    for (loss, g) in chunks {
        total += loss;
        for (acc, lg) in grads.layers.iter_mut().zip(&g.layers) {
            for (a, b) in acc.weight.iter_mut().zip(&lg.weight) {
                *a += b;
            }
            for (a, b) in acc.bias.iter_mut().zip(&lg.bias) {
                *a += b;
            }
        }
    }
    (total * weight, grads)
}

fn loss_only(net: &ScoreNetwork, rows: &[Vec<f64>], noise: &DsmNoise) -> f64 {
    let total: f64 = rows
        .iter()
        .enumerate()
        .map(|(i, r)| net.dsm_sample(r, &noise.u[i], noise.sigma[i], 0.0, None))
        .sum();
    total / rows.len() as f64
}

/// DSM loss with caller-supplied noise draws.
pub fn dsm_loss_with_noise(
    net: &ScoreNetwork,
    batch: &Tensor,
    noise: &DsmNoise,
) -> Result<(f64, Gradients)> {
    let rows = batch_rows(net, batch)?;
    if rows.is_empty() {
        return Err(Error::Param("DSM batch is empty".into()));
    }
    if noise.len() != rows.len() || noise.u.iter().any(|u| u.len() != net_dim(net)) {
        return Err(Error::Shape("noise draws do not match the batch".into()));
    }
    Ok(loss_and_grad(net, &rows, noise))
}

/// Batch-mean residual denoising score-matching loss
/// `‖u + σ_s r(x + σ_s u, σ_s)‖²` and its exact parameter gradient.
pub fn dsm_loss(
    net: &ScoreNetwork,
    batch: &Tensor,
    rng: &mut RngStream,
    s: f64,
) -> Result<(f64, Gradients)> {
    if !(s > 0.0) {
        return Err(Error::Param(format!("noise scale must be > 0, got {s}")));
    }
    let noise = DsmNoise::draw(rng, batch.outer_len(), net_dim(net), s);
    dsm_loss_with_noise(net, batch, &noise)
}

/// Largest relative discrepancy between backpropagated gradients and
/// central finite differences (step `1e-5`) of the DSM loss.
///
/// At most `max_per_layer` weights per layer are probed (evenly strided);
/// biases are always probed. The relative error of a component is
/// `|a − n| / max(|a|, |n|, 1e-8·(1 + |loss|))`.
pub fn backprop_check(
    net: &ScoreNetwork,
    batch: &Tensor,
    noise: &DsmNoise,
    max_per_layer: usize,
) -> Result<f64> {
    const H: f64 = 1e-5;
    let rows = batch_rows(net, batch)?;
    let (loss, grads) = dsm_loss_with_noise(net, batch, noise)?;
    let floor = 1e-8 * (1.0 + loss.abs());
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for (li, layer) in net.layers().iter().enumerate() {
        let nw = layer.weight.len();
        let stride = (nw / max_per_layer.max(1)).max(1);
        let weight_idx = (0..nw).step_by(stride);
        let params = weight_idx
            .map(|i| (false, i))
            .chain((0..layer.bias.len()).map(|i| (true, i)));
        for (is_bias, i) in params {
            let orig = *param_mut(&mut probe, li, is_bias, i);
            *param_mut(&mut probe, li, is_bias, i) = orig + H;
            let plus = loss_only(&probe, &rows, noise);
            *param_mut(&mut probe, li, is_bias, i) = orig - H;
            let minus = loss_only(&probe, &rows, noise);
            *param_mut(&mut probe, li, is_bias, i) = orig;
            let numeric = (plus - minus) / (2.0 * H);
            let analytic = if is_bias {
                grads.layers[li].bias[i]
            } else {
                grads.layers[li].weight[i]
            };
            let denom = analytic.abs().max(numeric.abs()).max(floor);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

fn param_mut(net: &mut ScoreNetwork, layer: usize, is_bias: bool, i: usize) -> &mut f64 {
    let l = &mut net.layers_mut()[layer];
    if is_bias {
        &mut l.bias[i]
    } else {
        &mut l.weight[i]
    }
}

/// Adam moment estimates, one slot per weight and bias vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(net: &ScoreNetwork) -> Self {
        let slots: Vec<Vec<f64>> = net
            .layers()
            .iter()
            .flat_map(|l| [vec![0.0; l.weight.len()], vec![0.0; l.bias.len()]])
            .collect();
        AdamState {
            t: 0,
            m: slots.clone(),
            v: slots,
        }
    }

    fn step(&mut self, net: &mut ScoreNetwork, grads: &Gradients, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        let params = net
            .layers_mut()
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias]);
        let gs = grads.layers.iter().flat_map(|g| [&g.weight, &g.bias]);
        for (((p, g), m), v) in params.zip(gs).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.adam_epsilon);
            }
        }
    }
}

/// Resumable training loop state.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub net: ScoreNetwork,
    pub cfg: TrainConfig,
    pub adam: AdamState,
    pub spectral: Vec<PowerIterationState>,
    pub rng: RngStream,
    pub step: u64,
}

impl Trainer {
    pub fn new(mut net: ScoreNetwork, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        net.set_sigma_floor(cfg.sigma_floor)?;
        let adam = AdamState::new(&net);
        let spectral = net
            .layers()
            .iter()
            .map(|l| PowerIterationState::new(l.rows))
            .collect();
        let rng = RngStream::new(cfg.seed, 0);
        Ok(Trainer {
            net,
            cfg,
            adam,
            spectral,
            rng,
            step: 0,
        })
    }

    /// Run `steps` optimizer updates, appending each step's loss to `losses`.
    /// On a non-finite loss the trace up to the failing step is kept and a
    /// numerical error naming the step is returned.
    pub fn run(&mut self, dataset: &Tensor, steps: usize, losses: &mut Vec<f64>) -> Result<()> {
        let n = dataset.outer_len();
        if n == 0 || dataset.rank() < 2 {
            return Err(Error::Param("training dataset is empty".into()));
        }
        if self.step == 0 && self.cfg.normalize_data && steps > 0 {
            let m = dataset.max_abs();
            if m > 0.0 {
                self.net.set_data_scale(m)?;
            }
        }
        let all_rows = batch_rows(&self.net, dataset)?;
        let dim = net_dim(&self.net);
        for _ in 0..steps {
            let rows: Vec<Vec<f64>> = (0..self.cfg.batch_size)
                .map(|_| all_rows[self.rng.index(n)].clone())
                .collect();
            let noise = DsmNoise::draw(&mut self.rng, rows.len(), dim, self.cfg.noise_scale);
            let (loss, grads) = loss_and_grad(&self.net, &rows, &noise);
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Numerical(format!(
                    "DSM loss diverged at step {} (loss = {loss})",
                    self.step
                )));
            }
            losses.push(loss);
            self.adam.step(&mut self.net, &grads, &self.cfg);
            self.project();
            self.step += 1;
        }
        Ok(())
    }

    fn project(&mut self) {
        let target = self.cfg.spectral_target;
        let iters = self.cfg.spectral_iters;
        for (layer, state) in self.net.layers_mut().iter_mut().zip(&mut self.spectral) {
            project_spectral_norm(
                &mut layer.weight,
                layer.rows,
                layer.cols,
                target,
                state,
                iters,
            );
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub net: ScoreNetwork,
    pub losses: Vec<f64>,
}

/// Train `net` for `cfg.steps` Adam updates of the DSM loss, projecting
/// every weight matrix onto the spectral-norm ball after each update.
pub fn train(net: ScoreNetwork, dataset: &Tensor, cfg: &TrainConfig) -> Result<TrainOutput> {
    let mut trainer = Trainer::new(net, cfg.clone())?;
    let mut losses = Vec::with_capacity(cfg.steps);
    trainer.run(dataset, cfg.steps, &mut losses)?;
    Ok(TrainOutput {
        net: trainer.net,
        losses,
    })
}
