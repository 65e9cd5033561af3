//! `holderlab` command-line driver: reads a JSON run config, computes one table family and
//! writes it with a manifest, caching results by content.

mod cache;
mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use holderlab::NumericMode;
use serde_json::json;

use crate::cache::{sha256_hex, Cache};
use crate::commands::{canonical_params, execute, Context};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{write_outputs, Manifest};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Float,
    Rational,
}

impl From<ModeArg> for NumericMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Float => NumericMode::Float,
            ModeArg::Rational => NumericMode::Rational,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "holderlab", version, about = "Limit states, Takagi functions and Hölder spectra of random interval maps")]
struct Cli {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `system.mode` in the config.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let config = RunConfig::load(&cli.config)?;
    let base = cli.config.parent().map(PathBuf::from).unwrap_or_default();
    let mut spec = config.system_spec(&base)?;
    if let Some(m) = cli.mode {
        spec.mode = m.into();
    }
    let seed = cli.seed.unwrap_or(config.seed);
    let params = canonical_params(config.command, &config.params)?;
    let (system, p) = spec.build(spec.mode)?;

    let system_value = serde_json::to_value(&spec).expect("serializable system");
    let mode_value = serde_json::to_value(spec.mode).expect("serializable mode");
    let key_source = json!({
        "version": holderlab::VERSION,
        "system": system_value,
        "mode": mode_value,
        "command": config.command,
        "params": params,
        "seed": seed,
    });
    let key = sha256_hex(serde_json::to_string(&key_source).expect("serializable key").as_bytes());
    log::debug!("cache key {key}");

    let cache = Cache::new(Cache::default_root());
    let cx = Context { system: &system, p: &p, mode: spec.mode, seed };
    let artifacts = cache.get_or_compute(&key, || execute(config.command, &params, &cx))?;

    let out = cli.out.clone().or(config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let manifest = Manifest {
        version: holderlab::VERSION,
        command: serde_json::to_value(config.command).expect("command").as_str().unwrap_or_default().to_string(),
        key,
        seed,
        mode: mode_value.as_str().unwrap_or_default().to_string(),
        system: system_value,
        params,
        files: Vec::new(),
    };
    write_outputs(&out, &artifacts, manifest)?;
    log::info!("wrote {} files to {}", artifacts.len() + 1, out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
