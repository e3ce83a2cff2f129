//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Kind {
    Float,
    Int,
    Bool,
    Path,
    Choice(&'static [&'static str]),
}

struct KeySpec {
    key: &'static str,
    default: &'static str,
    kind: Kind,
}

const fn k(key: &'static str, default: &'static str, kind: Kind) -> KeySpec {
    KeySpec { key, default, kind }
}

use Kind::*;

const DATA_KINDS: &[&str] = &["phantoms", "two_moons", "gaussian"];
const ARCHS: &[&str] = &["auto", "mlp", "conv"];
const PRIORS: &[&str] = &["checkpoint", "gaussian", "two_moons"];
const MODES: &[&str] = &["prior", "inversion"];

static KEYS: &[KeySpec] = &[
    k("run.seed", "0", Int),
    k("data.kind", "phantoms", Choice(DATA_KINDS)),
    k("data.train_count", "1000", Int),
    k("data.test_count", "20", Int),
    k("data.dim", "2", Int),
    k("phantom.size", "32", Int),
    k("phantom.min_ellipses", "3", Int),
    k("phantom.max_ellipses", "7", Int),
    k("phantom.intensity_min", "0.2", Float),
    k("phantom.intensity_max", "0.8", Float),
    k("moons.per_arc", "16", Int),
    k("moons.radius", "1.0", Float),
    k("moons.std", "0.1", Float),
    k("mask.acceleration", "4", Int),
    k("mask.center_fraction", "0.08", Float),
    k("lik.sigma_n", "0.1", Float),
    k("model.arch", "auto", Choice(ARCHS)),
    k("model.width", "128", Int),
    k("model.hidden", "4", Int),
    k("model.features", "16", Int),
    k("model.depth", "4", Int),
    k("model.channels", "2", Int),
    k("train.data", "", Path),
    k("train.resume", "", Path),
    k("train.learning_rate", "1e-4", Float),
    k("train.noise_scale", "1.0", Float),
    k("train.batch_size", "64", Int),
    k("train.steps", "1000", Int),
    k("train.beta1", "0.9", Float),
    k("train.beta2", "0.999", Float),
    k("train.adam_epsilon", "1e-8", Float),
    k("train.sigma_floor", "1e-3", Float),
    k("train.spectral_target", "2.0", Float),
    k("train.spectral_iters", "2", Int),
    k("train.normalize_data", "true", Bool),
    k("prior.kind", "checkpoint", Choice(PRIORS)),
    k("prior.checkpoint", "", Path),
    k("prior.tau2", "1.0", Float),
    k("prior.dim", "2", Int),
    k("sample.mode", "prior", Choice(MODES)),
    k("sample.chains", "8", Int),
    k("sample.measurement", "", Path),
    k("sample.mask", "", Path),
    k("sample.index", "0", Int),
    k("hmc.sigma_init", "1.0", Float),
    k("hmc.gamma", "0.995", Float),
    k("hmc.epsilon", "0.1", Float),
    k("hmc.exponent", "1.5", Float),
    k("hmc.sigma_final", "0.01", Float),
    k("hmc.steps_per_temperature", "3", Int),
    k("hmc.final_steps", "0", Int),
    k("hmc.leapfrog_steps", "5", Int),
    k("hmc.quad_nodes", "5", Int),
    k("hmc.mh", "true", Bool),
    k("hmc.eds", "true", Bool),
    k("hmc.sigma_floor", "1e-3", Float),
    k("eval.samples", "", Path),
    k("eval.diagnostics", "", Path),
    k("eval.truth", "", Path),
    k("eval.measurement", "", Path),
    k("eval.mask", "", Path),
    k("eval.index", "0", Int),
];

fn spec(key: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|s| s.key == key)
}

fn unknown_key(key: &str) -> Error {
    let best = KEYS
        .iter()
        .map(|s| (strsim::damerau_levenshtein(key, s.key), s.key))
        .min()
        .filter(|&(d, _)| d <= 4);
    match best {
        Some((_, near)) => Error::Config(format!("unknown key `{key}`; did you mean `{near}`?")),
        None => Error::Config(format!("unknown key `{key}`")),
    }
}

fn check_value(s: &KeySpec, value: &str) -> Result<()> {
    let bad = |what: &str| Error::Config(format!("`{}`: expected {what}, got `{value}`", s.key));
    match s.kind {
        Float => {
            value.parse::<f64>().map_err(|_| bad("a number"))?;
        }
        Int => {
            value
                .parse::<u64>()
                .map_err(|_| bad("a non-negative integer"))?;
        }
        Bool => {
            value.parse::<bool>().map_err(|_| bad("true or false"))?;
        }
        Path => {}
        Choice(options) => {
            if !options.contains(&value) {
                return Err(bad(&format!("one of {}", options.join(", "))));
            }
        }
    }
    Ok(())
}

/// Every tunable of a run, with defaults filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS
                .iter()
                .map(|s| (s.key, s.default.to_string()))
                .collect(),
        }
    }
}

impl RunConfig {
    /// Parse config text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set_resolved(key.trim(), value.trim(), base)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        let base = std::path::absolute(dir).map_err(|e| Error::io(dir, e))?;
        RunConfig::parse(&text, &base)
    }

    /// Apply one `key=value` override, resolving relative paths against `base`.
    pub fn set_resolved(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let s = spec(key).ok_or_else(|| unknown_key(key))?;
        check_value(s, value)?;
        let value = if s.kind == Path && !value.is_empty() && Path::new(value).is_relative() {
            base.join(value).to_string_lossy().into_owned()
        } else {
            value.to_string()
        };
        self.values.insert(s.key, value);
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_resolved(key, value, Path::new("."))
    }

    /// Parse a `key=value` override string.
    pub fn apply_override(&mut self, assignment: &str, base: &Path) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        self.set_resolved(key.trim(), value.trim(), base)
    }

    fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("config key `{key}` is not registered"))
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.raw(key).parse().expect("validated float")
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.raw(key).parse().expect("validated integer")
    }

    pub fn usize(&self, key: &str) -> usize {
        self.u64(key) as usize
    }

    pub fn bool(&self, key: &str) -> bool {
        self.raw(key).parse().expect("validated bool")
    }

    pub fn str(&self, key: &str) -> &str {
        self.raw(key)
    }

    /// A path-valued key, or an error naming the key when it is unset.
    pub fn path(&self, key: &str) -> Result<PathBuf> {
        self.optional_path(key)
            .ok_or_else(|| Error::Config(format!("`{key}` must be set")))
    }

    pub fn optional_path(&self, key: &str) -> Option<PathBuf> {
        let v = self.raw(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    /// Canonical text form; parsing it back yields an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for (key, value) in &self.values {
            let ns = key.split('.').next().unwrap_or("");
            if ns != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = ns;
            }
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    pub fn keys() -> impl Iterator<Item = &'static str> {
        KEYS.iter().map(|s| s.key)
    }
}
