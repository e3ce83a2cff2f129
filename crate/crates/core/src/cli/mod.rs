//! `dsmhmc` command line: `make-data`, `train`, `sample` and `eval`, each a
//! pure function of a flat config plus its input files.

mod commands;
mod config;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use commands::{cmd_eval, cmd_make_data, cmd_sample, cmd_train};
pub use config::RunConfig;

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "dsmhmc",
    version,
    about = "Score-based posterior sampling with annealed HMC"
)]
pub struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Worker thread cap (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, Subcommand, PartialEq, Eq)]
pub enum Command {
    /// Generate train/test datasets, mask and measurements.
    MakeData,
    /// Train a score network by denoising score matching.
    Train,
    /// Draw posterior (or prior) samples with annealed HMC.
    Sample,
    /// PSNR report for a sample set against ground truth.
    Eval,
}

impl Cli {
    /// Config file, then `--set` overrides, then `--seed`.
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
        for s in &self.set {
            cfg.apply_override(s, &cwd)?;
        }
        if let Some(seed) = self.seed {
            cfg.set("run.seed", &seed.to_string())?;
        }
        Ok(cfg)
    }
}

/// Execute one command under an optional worker cap.
pub fn execute(command: Command, cfg: &RunConfig, out: &Path, workers: usize) -> Result<()> {
    let run = || match command {
        Command::MakeData => cmd_make_data(cfg, out),
        Command::Train => cmd_train(cfg, out),
        Command::Sample => cmd_sample(cfg, out),
        Command::Eval => cmd_eval(cfg, out),
    };
    if workers == 0 {
        return run();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Param(format!("cannot build worker pool: {e}")))?;
    pool.install(run)
}

/// Parse `args` and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = cli
        .resolve_config()
        .and_then(|cfg| execute(cli.command, &cfg, &cli.out, cli.workers));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
