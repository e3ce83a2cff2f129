//! `DSMC` checkpoint files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "DSMC"  u32 version (1)  u32 layer_count
//! per layer: u32 rows, u32 cols, f64[rows*cols] weights, f64[rows] biases, u8 tag,
//!            u32 dilation
//! TrainConfig: f64 learning_rate, f64 noise_scale, u64 batch_size, u64 steps,
//!              f64 beta1, f64 beta2, f64 adam_epsilon, f64 sigma_floor, u64 seed,
//!              f64 spectral_target, u64 spectral_iters, u64 normalize_data
//! u64 step
//! RNG: u64 seed, u64 stream_id, u64 word_pos_lo, u64 word_pos_hi
//! network: u32 rank, u64[rank] signal_shape, u8 output_scaling, f64 sigma_floor,
//!          f64 data_scale
//! per layer: f64[rows] power-iteration vector
//! u8 has_optimizer; if 1: u64 t, then per layer m_w, m_b, v_w, v_b
//! ```
//!
//! The layer tag packs the activation in bits 0–3 (0 identity, 1 SiLU), the
//! layer kind in bits 4–6 (0 dense, 1 conv 3×3) and the residual flag in bit 7.

use std::fs;
use std::path::Path;

use super::network::{Activation, Layer, LayerKind, ScoreNetwork};
use super::spectral::PowerIterationState;
use super::train::{AdamState, TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::numerics::tnsr::{write_bytes, ByteReader};
use crate::numerics::{RngState, RngStream};

pub const DSMC_MAGIC: &[u8; 4] = b"DSMC";
pub const DSMC_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub net: ScoreNetwork,
    pub cfg: TrainConfig,
    pub step: u64,
    pub rng: RngState,
    pub spectral: Vec<PowerIterationState>,
    pub adam: Option<AdamState>,
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::Format {
        kind: "DSMC",
        msg: msg.into(),
    }
}

fn layer_tag(l: &Layer) -> u8 {
    let act = match l.activation {
        Activation::Identity => 0u8,
        Activation::Silu => 1,
    };
    let kind = match l.kind {
        LayerKind::Dense => 0u8,
        LayerKind::Conv3x3 => 1,
    };
    act | (kind << 4) | ((l.residual as u8) << 7)
}

fn parse_tag(tag: u8) -> Result<(Activation, LayerKind, bool)> {
    let act = match tag & 0x0f {
        0 => Activation::Identity,
        1 => Activation::Silu,
        a => return Err(malformed(format!("unknown activation tag {a}"))),
    };
    let kind = match (tag >> 4) & 0x07 {
        0 => LayerKind::Dense,
        1 => LayerKind::Conv3x3,
        k => return Err(malformed(format!("unknown layer kind {k}"))),
    };
    Ok((act, kind, tag & 0x80 != 0))
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }
}

fn read_f64s(r: &mut ByteReader<'_>, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| r.f64()).collect()
}

impl Checkpoint {
    pub fn from_trainer(t: &Trainer) -> Self {
        Checkpoint {
            net: t.net.clone(),
            cfg: t.cfg.clone(),
            step: t.step,
            rng: t.rng.state(),
            spectral: t.spectral.clone(),
            adam: Some(t.adam.clone()),
        }
    }

    /// Rebuild a trainer that continues exactly where this checkpoint left off.
    pub fn into_trainer(self) -> Result<Trainer> {
        let mut t = Trainer::new(self.net, self.cfg)?;
        t.step = self.step;
        t.rng = RngStream::from_state(self.rng);
        t.spectral = self.spectral;
        if let Some(adam) = self.adam {
            t.adam = adam;
        }
        Ok(t)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(DSMC_MAGIC);
        w.u32(DSMC_VERSION);
        let layers = self.net.layers();
        w.u32(layers.len() as u32);
        for l in layers {
            w.u32(l.rows as u32);
            w.u32(l.cols as u32);
            w.f64s(&l.weight);
            w.f64s(&l.bias);
            w.u8(layer_tag(l));
            w.u32(l.dilation as u32);
        }
        let c = &self.cfg;
        w.f64(c.learning_rate);
        w.f64(c.noise_scale);
        w.u64(c.batch_size as u64);
        w.u64(c.steps as u64);
        w.f64(c.beta1);
        w.f64(c.beta2);
        w.f64(c.adam_epsilon);
        w.f64(c.sigma_floor);
        w.u64(c.seed);
        w.f64(c.spectral_target);
        w.u64(c.spectral_iters as u64);
        w.u64(c.normalize_data as u64);
        w.u64(self.step);
        w.u64(self.rng.seed);
        w.u64(self.rng.stream_id);
        w.u64(self.rng.word_pos as u64);
        w.u64((self.rng.word_pos >> 64) as u64);

        let shape = self.net.signal_shape();
        w.u32(shape.len() as u32);
        for &d in shape {
            w.u64(d as u64);
        }
        w.u8(self.net.output_scaling() as u8);
        w.f64(self.net.sigma_floor());
        w.f64(self.net.data_scale());
        for s in &self.spectral {
            w.f64s(&s.u);
        }
        match &self.adam {
            None => w.u8(0),
            Some(a) => {
                w.u8(1);
                w.u64(a.t);
                for i in 0..layers.len() {
                    for slot in [&a.m[2 * i], &a.m[2 * i + 1], &a.v[2 * i], &a.v[2 * i + 1]] {
                        w.f64s(slot);
                    }
                }
            }
        }
        w.0
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "DSMC");
        if r.take(4)? != DSMC_MAGIC {
            return Err(malformed("bad magic"));
        }
        let version = r.u32()?;
        if version != DSMC_VERSION {
            return Err(malformed(format!("unsupported version {version}")));
        }
        let n_layers = r.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let weight = read_f64s(&mut r, rows * cols)?;
            let bias = read_f64s(&mut r, rows)?;
            let (act, kind, residual) = parse_tag(r.u8()?)?;
            let dilation = r.u32()? as usize;
            let mut layer = Layer::new(kind, rows, cols, act, residual)
                .and_then(|l| l.with_dilation(dilation))
                .map_err(|e| malformed(e.to_string()))?;
            layer.weight = weight;
            layer.bias = bias;
            layers.push(layer);
        }
        let cfg = TrainConfig {
            learning_rate: r.f64()?,
            noise_scale: r.f64()?,
            batch_size: r.u64()? as usize,
            steps: r.u64()? as usize,
            beta1: r.f64()?,
            beta2: r.f64()?,
            adam_epsilon: r.f64()?,
            sigma_floor: r.f64()?,
            seed: r.u64()?,
            spectral_target: r.f64()?,
            spectral_iters: r.u64()? as usize,
            normalize_data: r.u64()? != 0,
        };
        let step = r.u64()?;
        let rng = RngState {
            seed: r.u64()?,
            stream_id: r.u64()?,
            word_pos: {
                let lo = r.u64()? as u128;
                let hi = r.u64()? as u128;
                lo | (hi << 64)
            },
        };
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let output_scaling = r.u8()? != 0;
        let sigma_floor = r.f64()?;
        let data_scale = r.f64()?;
        let spectral = layers
            .iter()
            .map(|l| read_f64s(&mut r, l.rows).map(|u| PowerIterationState { u }))
            .collect::<Result<Vec<_>>>()?;
        let adam = match r.u8()? {
            0 => None,
            1 => {
                let t = r.u64()?;
                let mut m = Vec::with_capacity(2 * layers.len());
                let mut v = Vec::with_capacity(2 * layers.len());
                for l in &layers {
                    m.push(read_f64s(&mut r, l.weight.len())?);
                    m.push(read_f64s(&mut r, l.bias.len())?);
                    v.push(read_f64s(&mut r, l.weight.len())?);
                    v.push(read_f64s(&mut r, l.bias.len())?);
                }
                Some(AdamState { t, m, v })
            }
            f => return Err(malformed(format!("bad optimizer flag {f}"))),
        };
        if r.remaining() != 0 {
            return Err(malformed(format!("{} trailing bytes", r.remaining())));
        }
        let net = ScoreNetwork::from_layers(layers, shape, sigma_floor, output_scaling, data_scale)
            .map_err(|e| malformed(e.to_string()))?;
        Ok(Checkpoint {
            net,
            cfg,
            step,
            rng,
            spectral,
            adam,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::decode(&bytes)
    }
}
