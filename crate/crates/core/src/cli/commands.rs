use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};

use super::config::RunConfig;
use crate::dsm::{Checkpoint, ScoreNetwork, TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::forward_models::{
    simulate_measurement, CartesianMaskSpec, GaussianLikelihood, MaskedFourierOperator,
};
use crate::hmc::{annealed_sample, AnnealingSchedule, SamplerConfig};
use crate::numerics::{
    packed_magnitude, read_tensor, write_tensor, ComplexImage, RngStream, Tensor,
};
use crate::phantom_eval::{make_phantoms, mri_metrics, write_pgm, PhantomSpec, UncertaintyMap};
use crate::score_models::{IsotropicGaussianScore, ScoreModel, TwoMoonsScore};

/// Seed offsets keeping the test set and measurement noise off the training streams.
const TEST_SEED_TAG: u64 = 0x7e57_0000_0000_0001;
const NOISE_SEED_TAG: u64 = 0x0015_e000_0000_0002;
const PREVIEWS: usize = 4;

fn prepare_out(cfg: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(&out.join("config.resolved"), &cfg.to_text())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn phantom_spec(cfg: &RunConfig) -> PhantomSpec {
    PhantomSpec {
        size: cfg.usize("phantom.size"),
        min_ellipses: cfg.usize("phantom.min_ellipses"),
        max_ellipses: cfg.usize("phantom.max_ellipses"),
        intensity_min: cfg.f64("phantom.intensity_min"),
        intensity_max: cfg.f64("phantom.intensity_max"),
        seed: cfg.u64("run.seed"),
    }
}

fn mask_spec(cfg: &RunConfig) -> CartesianMaskSpec {
    CartesianMaskSpec {
        acceleration: cfg.usize("mask.acceleration"),
        center_fraction: cfg.f64("mask.center_fraction"),
        seed: cfg.u64("run.seed"),
    }
}

fn two_moons(cfg: &RunConfig) -> Result<TwoMoonsScore> {
    TwoMoonsScore::new(
        cfg.usize("moons.per_arc"),
        cfg.f64("moons.radius"),
        cfg.f64("moons.std"),
    )
}

/// Datasets, mask and simulated measurements.
pub fn cmd_make_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    let n_train = cfg.usize("data.train_count");
    let n_test = cfg.usize("data.test_count");
    let seed = cfg.u64("run.seed");
    match cfg.str("data.kind") {
        "phantoms" => {
            let spec = phantom_spec(cfg);
            spec.validate()?;
            let mask_spec = mask_spec(cfg);
            mask_spec.validate(spec.size)?;
            prepare_out(cfg, out)?;
            let train = make_phantoms(&spec, n_train)?;
            let test_spec = PhantomSpec {
                seed: seed ^ TEST_SEED_TAG,
                ..spec.clone()
            };
            let test = make_phantoms(&test_spec, n_test)?;
            let columns = mask_spec.build(spec.size)?;
            let op = MaskedFourierOperator::from_columns(&columns, spec.size)?;
            let sigma_n = cfg.f64("lik.sigma_n");
            let mut ys = Vec::with_capacity(n_test);
            for (i, img) in test.unstack().into_iter().enumerate() {
                let x = ComplexImage::from_real(img)?.pack();
                let mut rng = RngStream::new(seed ^ NOISE_SEED_TAG, i as u64);
                ys.push(simulate_measurement(&op, &x, sigma_n, &mut rng)?);
            }
            write_tensor(&out.join("train.tnsr"), &train)?;
            write_tensor(&out.join("test.tnsr"), &test)?;
            write_tensor(&out.join("mask.tnsr"), op.mask())?;
            if !ys.is_empty() {
                write_tensor(&out.join("measurements.tnsr"), &Tensor::stack(&ys)?)?;
            }
            write_pgm(&out.join("mask.pgm"), op.mask())?;
            for i in 0..n_train.min(PREVIEWS) {
                write_pgm(&out.join(format!("train_{i:03}.pgm")), &train.outer(i))?;
            }
            for i in 0..n_test.min(PREVIEWS) {
                write_pgm(&out.join(format!("test_{i:03}.pgm")), &test.outer(i))?;
            }
        }
        kind => {
            let dim = cfg.usize("data.dim");
            let draw = |stream: u64, n: usize| -> Result<Tensor> {
                let mut rng = RngStream::new(seed, stream);
                Ok(match kind {
                    "two_moons" => two_moons(cfg)?.mixture().sample(&mut rng, n, 0.0),
                    _ => {
                        if dim == 0 {
                            return Err(Error::Param("data.dim must be >= 1".into()));
                        }
                        let s = cfg.f64("prior.tau2").sqrt();
                        rng.gaussian(&[n, dim]).scale(s)
                    }
                })
            };
            let train = draw(0, n_train)?;
            let test = draw(1, n_test)?;
            prepare_out(cfg, out)?;
            write_tensor(&out.join("train.tnsr"), &train)?;
            write_tensor(&out.join("test.tnsr"), &test)?;
        }
    }
    info!(
        "wrote {n_train} training and {n_test} test items to {}",
        out.display()
    );
    Ok(())
}

fn train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        learning_rate: cfg.f64("train.learning_rate"),
        noise_scale: cfg.f64("train.noise_scale"),
        batch_size: cfg.usize("train.batch_size"),
        steps: cfg.usize("train.steps"),
        beta1: cfg.f64("train.beta1"),
        beta2: cfg.f64("train.beta2"),
        adam_epsilon: cfg.f64("train.adam_epsilon"),
        sigma_floor: cfg.f64("train.sigma_floor"),
        seed: cfg.u64("run.seed"),
        spectral_target: cfg.f64("train.spectral_target"),
        spectral_iters: cfg.usize("train.spectral_iters"),
        normalize_data: cfg.bool("train.normalize_data"),
    }
}

/// Bring a dataset into the layout the chosen architecture consumes:
/// `N×d` for the MLP, `N×H×W×C` for the conv net (real images gain a zero
/// imaginary channel when `C = 2`).
fn shape_dataset(data: Tensor, arch: &str, channels: usize) -> Result<(Tensor, &'static str)> {
    let shape = data.shape().to_vec();
    let arch = match (arch, shape.len()) {
        ("auto", 2) | ("mlp", 2) => "mlp",
        ("auto", 3 | 4) | ("conv", 3 | 4) => "conv",
        (a, r) => {
            return Err(Error::Shape(format!(
                "model.arch `{a}` cannot train on rank-{r} data {shape:?}"
            )))
        }
    };
    if arch == "mlp" || shape.len() == 4 {
        return Ok((data, arch));
    }
    let (n, h, w) = (shape[0], shape[1], shape[2]);
    let out = match channels {
        1 => data.reshape(&[n, h, w, 1])?,
        2 => {
            let items = data
                .unstack()
                .into_iter()
                .map(|img| ComplexImage::from_real(img).map(|c| c.pack()))
                .collect::<Result<Vec<_>>>()?;
            Tensor::stack(&items)?
        }
        c => {
            return Err(Error::Param(format!(
                "model.channels must be 1 or 2, got {c}"
            )))
        }
    };
    Ok((out, arch))
}

fn write_loss_csv(path: &Path, first_step: u64, losses: &[f64]) -> Result<()> {
    let mut s = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(s, "{},{l:e}", first_step + i as u64);
    }
    write_text(path, &s)
}

/// Train (or resume) a score network; writes `checkpoint.dsmc` and `loss.csv`.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data_path = cfg.path("train.data")?;
    let raw = read_tensor(&data_path)?;
    let (data, arch) = shape_dataset(raw, cfg.str("model.arch"), cfg.usize("model.channels"))?;
    let tc = train_config(cfg);
    let mut trainer = match cfg.optional_path("train.resume") {
        Some(p) => {
            let mut t = Checkpoint::load(&p)?.into_trainer()?;
            t.cfg.steps = tc.steps;
            t
        }
        None => {
            tc.validate()?;
            let mut rng = RngStream::new(tc.seed, 1);
            let shape = data.shape();
            let net = if arch == "mlp" {
                ScoreNetwork::mlp(
                    shape[1],
                    cfg.usize("model.width"),
                    cfg.usize("model.hidden"),
                    &mut rng,
                )?
            } else {
                ScoreNetwork::conv(
                    shape[1],
                    shape[2],
                    shape[3],
                    cfg.usize("model.features"),
                    cfg.usize("model.depth"),
                    &mut rng,
                )?
            };
            Trainer::new(net, tc.clone())?
        }
    };
    if data.shape()[1..] != *trainer.net.signal_shape() {
        return Err(Error::Shape(format!(
            "dataset items {:?} do not match network signal {:?}",
            &data.shape()[1..],
            trainer.net.signal_shape()
        )));
    }
    prepare_out(cfg, out)?;
    let first = trainer.step;
    let mut losses = Vec::with_capacity(tc.steps);
    let result = trainer.run(&data, tc.steps, &mut losses);
    write_loss_csv(&out.join("loss.csv"), first, &losses)?;
    result?;
    Checkpoint::from_trainer(&trainer).save(&out.join("checkpoint.dsmc"))?;
    if let (Some(a), Some(b)) = (losses.first(), losses.last()) {
        info!("trained {} steps, loss {a:.4e} -> {b:.4e}", losses.len());
    }
    Ok(())
}

fn sampler_config(cfg: &RunConfig) -> SamplerConfig {
    SamplerConfig {
        schedule: AnnealingSchedule {
            sigma_init: cfg.f64("hmc.sigma_init"),
            gamma: cfg.f64("hmc.gamma"),
            epsilon: cfg.f64("hmc.epsilon"),
            exponent: cfg.f64("hmc.exponent"),
            sigma_final: cfg.f64("hmc.sigma_final"),
            steps_per_temperature: cfg.usize("hmc.steps_per_temperature"),
            final_steps: cfg.usize("hmc.final_steps"),
        },
        leapfrog_steps: cfg.usize("hmc.leapfrog_steps"),
        quad_nodes: cfg.usize("hmc.quad_nodes"),
        mh: cfg.bool("hmc.mh"),
        eds: cfg.bool("hmc.eds"),
        sigma_floor: cfg.f64("hmc.sigma_floor"),
        record_every: 0,
    }
}

/// Item `index` of a stacked tensor, or the tensor itself if it already has
/// the single-item rank.
fn select(t: Tensor, item_rank: usize, index: usize, what: &str) -> Result<Tensor> {
    if t.rank() == item_rank {
        return Ok(t);
    }
    if t.rank() != item_rank + 1 {
        return Err(Error::Shape(format!("{what} has shape {:?}", t.shape())));
    }
    if index >= t.outer_len() {
        return Err(Error::Param(format!(
            "{what} index {index} out of range for {} items",
            t.outer_len()
        )));
    }
    Ok(t.outer(index))
}

/// MRI operator from a `H×W` mask, or from `W` columns given the height.
fn load_operator(mask_path: &Path, height: Option<usize>) -> Result<MaskedFourierOperator> {
    let mask = read_tensor(mask_path)?;
    match (mask.rank(), height) {
        (2, _) => MaskedFourierOperator::new(mask),
        (1, Some(h)) => MaskedFourierOperator::from_columns(&mask, h),
        (1, None) => MaskedFourierOperator::from_columns(&mask, mask.len()),
        _ => Err(Error::Shape(format!("mask has shape {:?}", mask.shape()))),
    }
}

fn load_likelihood(
    cfg: &RunConfig,
    y_key: &str,
    mask_key: &str,
    index_key: &str,
) -> Result<GaussianLikelihood> {
    let y = read_tensor(&cfg.path(y_key)?)?;
    let y = select(y, 3, cfg.usize(index_key), "measurement")?;
    let op = load_operator(&cfg.path(mask_key)?, Some(y.shape()[0]))?;
    GaussianLikelihood::new(Arc::new(op), y, cfg.f64("lik.sigma_n"))
}

/// Prior score model and its signal shape.
fn build_prior(
    cfg: &RunConfig,
    signal: Option<&[usize]>,
) -> Result<(Box<dyn ScoreModel>, Vec<usize>)> {
    let fixed = |shape: &[usize]| -> Result<()> {
        match signal {
            Some(s) if s != shape => Err(Error::Shape(format!(
                "prior signal {shape:?} does not match operator input {s:?}"
            ))),
            _ => Ok(()),
        }
    };
    Ok(match cfg.str("prior.kind") {
        "checkpoint" => {
            let net = Checkpoint::load(&cfg.path("prior.checkpoint")?)?.net;
            fixed(net.signal_shape())?;
            let shape = net.signal_shape().to_vec();
            (Box::new(net), shape)
        }
        "gaussian" => {
            let shape = match signal {
                Some(s) => s.to_vec(),
                None => vec![cfg.usize("prior.dim")],
            };
            let g = IsotropicGaussianScore::new(Tensor::zeros(&shape), cfg.f64("prior.tau2"))?;
            (Box::new(g), shape)
        }
        _ => {
            fixed(&[2])?;
            (Box::new(two_moons(cfg)?), vec![2])
        }
    })
}

/// Display image for a signal: magnitude of packed complex images, the
/// image itself for real 2D signals.
fn preview_image(x: &Tensor) -> Option<Tensor> {
    match x.shape() {
        [_, _, 2] => packed_magnitude(x).ok(),
        [_, _] => Some(x.clone()),
        [h, w, 1] => x.clone().reshape(&[*h, *w]).ok(),
        _ => None,
    }
}

/// Annealed HMC in prior or inversion mode; writes samples, diagnostics,
/// uncertainty maps and previews.
pub fn cmd_sample(cfg: &RunConfig, out: &Path) -> Result<()> {
    let scfg = sampler_config(cfg);
    scfg.validate()?;
    let chains = cfg.usize("sample.chains");
    let likelihood = match cfg.str("sample.mode") {
        "inversion" => Some(load_likelihood(
            cfg,
            "sample.measurement",
            "sample.mask",
            "sample.index",
        )?),
        _ => None,
    };
    let signal = likelihood
        .as_ref()
        .map(|l| l.operator().input_shape().to_vec());
    let (prior, shape) = build_prior(cfg, signal.as_deref())?;
    let init = likelihood.is_none().then(|| Tensor::zeros(&shape));
    let set = annealed_sample(
        prior.as_ref(),
        likelihood.as_ref(),
        &scfg,
        chains,
        init.as_ref(),
        cfg.u64("run.seed"),
    )?;
    let rate = set.divergence_rate();
    if rate > 0.5 {
        warn!("divergence rate {rate:.3} exceeds 0.5");
    }
    prepare_out(cfg, out)?;
    set.save(&out.join("samples.tnsr"), &out.join("diagnostics.txt"))?;
    if set.len() >= 2 {
        let map = UncertaintyMap::from_samples(&set.samples)?;
        write_tensor(&out.join("uncertainty_mean.tnsr"), &map.mean)?;
        write_tensor(&out.join("uncertainty_std.tnsr"), &map.std)?;
        if let (Some(m), Some(s)) = (preview_image(&map.mean), channel_norm(&map.std)) {
            write_pgm(&out.join("mean.pgm"), &m)?;
            write_pgm(&out.join("std.pgm"), &s)?;
        }
    }
    for (i, x) in set.samples.iter().take(PREVIEWS).enumerate() {
        if let Some(img) = preview_image(x) {
            write_pgm(&out.join(format!("sample_{i:03}.pgm")), &img)?;
        }
    }
    if let Some(lik) = &likelihood {
        let zf = lik.operator().adjoint(lik.measurement())?;
        if let Some(img) = preview_image(&zf) {
            write_pgm(&out.join("zero_filled.pgm"), &img)?;
        }
    }
    Ok(())
}

/// Per-pixel Euclidean norm over the channel axis of an `H×W×C` map.
fn channel_norm(t: &Tensor) -> Option<Tensor> {
    match *t.shape() {
        [h, w, c] => {
            let data = t
                .data()
                .chunks(c)
                .map(|px| px.iter().map(|v| v * v).sum::<f64>().sqrt())
                .collect();
            Tensor::new(vec![h, w], data).ok()
        }
        [_, _] => Some(t.clone()),
        _ => None,
    }
}

/// Totals parsed from a diagnostics table.
#[derive(Default)]
struct AcceptanceSummary {
    accepted: u64,
    proposed: u64,
    divergent: u64,
}

fn read_acceptance(path: &Path) -> Result<AcceptanceSummary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut s = AcceptanceSummary::default();
    let bad = || Error::Format {
        kind: "diagnostics",
        msg: format!("unexpected row in {}", path.display()),
    };
    for line in text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("chain,"))
    {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad());
        }
        let num = |i: usize| f[i].parse::<u64>().map_err(|_| bad());
        s.accepted += num(1)?;
        s.proposed += num(2)?;
        s.divergent += num(3)?;
    }
    Ok(s)
}

/// PSNR report of a sample set against ground truth.
pub fn cmd_eval(cfg: &RunConfig, out: &Path) -> Result<()> {
    let samples_path = cfg.path("eval.samples")?;
    let samples = read_tensor(&samples_path)?;
    let truth = read_tensor(&cfg.path("eval.truth")?)?;
    let truth = select(truth, 2, cfg.usize("eval.index"), "ground truth")?;
    let (h, w) = (truth.shape()[0], truth.shape()[1]);
    if samples.shape().len() != 4 || samples.shape()[1..] != [h, w, 2] {
        return Err(Error::Shape(format!(
            "samples {:?} do not match ground truth {:?} (expected N×{h}×{w}×2)",
            samples.shape(),
            truth.shape()
        )));
    }
    let lik = load_likelihood(cfg, "eval.measurement", "eval.mask", "eval.index")?;
    let zf = lik.operator().adjoint(lik.measurement())?;
    let items = samples.unstack();
    let m = mri_metrics(&truth, &items, &zf)?;
    let diag_path = cfg
        .optional_path("eval.diagnostics")
        .or_else(|| sibling(&samples_path, "diagnostics.txt"));
    let acceptance = match diag_path {
        Some(p) if p.exists() => Some(read_acceptance(&p)?),
        _ => None,
    };

    let mut r = String::new();
    let _ = writeln!(r, "# samples={} image={h}x{w}", items.len());
    if let Some(a) = acceptance {
        let rate = if a.proposed > 0 {
            a.accepted as f64 / a.proposed as f64
        } else {
            0.0
        };
        let _ = writeln!(
            r,
            "# acceptance accepted={} proposed={} rate={rate:.6} divergent={}",
            a.accepted, a.proposed, a.divergent
        );
    }
    let _ = writeln!(r, "# mean_per_sample_psnr_db={:.6}", m.mean_per_sample());
    let _ = writeln!(r, "sample,psnr_db");
    for (i, p) in m.per_sample.iter().enumerate() {
        let _ = writeln!(r, "{i},{p:.6}");
    }
    let _ = writeln!(r, "mean_of_samples,{:.6}", m.mean_of_samples);
    let _ = writeln!(r, "zero_filled,{:.6}", m.zero_filled);
    prepare_out(cfg, out)?;
    write_text(&out.join("report.txt"), &r)
}

fn sibling(path: &Path, name: &str) -> Option<PathBuf> {
    path.parent().map(|d| d.join(name))
}
