//! Command-line front end: configuration, subcommand dispatch, and run manifests.

pub mod commands;
pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "fracspde", version, about = "Fractional non-stationary SPDE fields: simulate, fit, predict, score")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; documented defaults apply when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `io.out_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (overrides `threads`).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Model class: nf-s, nf-ns, f-s, f-ns.
    #[arg(long, global = true)]
    pub class: Option<String>,
    /// Number of basis functions for non-stationary classes.
    #[arg(long, global = true)]
    pub basis: Option<usize>,
    /// Non-stationarity threshold.
    #[arg(long, global = true)]
    pub cns: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset.
    Simulate,
    /// MAP estimate of the model parameters.
    Fit,
    /// Posterior prediction from a fit.
    Predict,
    /// RMSE and CRPS of a prediction against truth.
    Score,
    /// Calibrate the spectral penalties.
    Calibrate,
    /// Run the candidate-model comparison.
    Study,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Fit => "fit",
            Command::Predict => "predict",
            Command::Score => "score",
            Command::Calibrate => "calibrate",
            Command::Study => "study",
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    status: &'a str,
    error: Option<String>,
    version: &'a str,
    config: Option<&'a RunConfig>,
    outputs: Vec<PathBuf>,
    extra: std::collections::BTreeMap<String, serde_json::Value>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

/// Resolves the configuration from file and flags.
pub fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.io.out_dir = o.clone();
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(c) = &cli.class {
        cfg.model.class = fracspde::inference::ModelClass::parse(c)
            .with_context(|| format!("--class: unknown model class `{c}` (expected nf-s, nf-ns, f-s, f-ns)"))?;
    }
    if let Some(b) = cli.basis {
        cfg.model.basis = b;
    }
    if let Some(c) = cli.cns {
        cfg.model.cns = c;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cmd: Command, cfg: &RunConfig) -> Result<commands::Outcome> {
    match cmd {
        Command::Simulate => commands::simulate(cfg),
        Command::Fit => commands::fit(cfg),
        Command::Predict => commands::predict_cmd(cfg),
        Command::Score => commands::score(cfg),
        Command::Calibrate => commands::calibrate(cfg),
        Command::Study => commands::study(cfg),
    }
}

/// Runs a parsed command line and writes the manifest whatever the outcome.
pub fn run(cli: &Cli) -> Result<()> {
    let resolved = resolve(cli);
    let out_dir = match &resolved {
        Ok(c) => c.io.out_dir.clone(),
        Err(_) => cli.out.clone().unwrap_or_else(|| PathBuf::from("out")),
    };
    let result = resolved.as_ref().map_err(|e| anyhow::anyhow!("{e:#}")).and_then(|cfg| {
        fs::create_dir_all(&cfg.io.out_dir).with_context(|| format!("creating {}", cfg.io.out_dir.display()))?;
        fs::write(cfg.io.out_dir.join(RESOLVED_CONFIG_FILE), cfg.to_toml()?)?;
        let threads = cfg.threads.max(1);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        log::info!("running {} with {threads} thread(s)", cli.command.name());
        pool.install(|| dispatch(cli.command, cfg))
    });
    let (status, error, outputs, extra) = match result {
        Ok(o) => ("ok", None, o.outputs, o.extra),
        Err(e) => ("error", Some(format!("{e:#}")), Vec::new(), Default::default()),
    };
    let manifest = Manifest {
        command: cli.command.name(),
        status,
        error: error.clone(),
        version: env!("CARGO_PKG_VERSION"),
        config: resolved.as_ref().ok(),
        outputs,
        extra,
    };
    write_manifest(&out_dir, &manifest)?;
    match error {
        Some(e) => Err(anyhow::anyhow!(e)),
        None => Ok(()),
    }
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(m)?)?;
    Ok(())
}
