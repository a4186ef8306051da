//! Command-line surface of the `cscausal` binary.
//!
//! - `fit <config>`: every estimator in a TOML run config on one CSV.
//! - `simulate <design>`: a standard simulation study.
//! - `sensitivity <config>`: the estimators refitted over a grid of `Σ`.
//!
//! Every output file starts with a manifest line (`# cscausal <version>
//! config_sha256=<hex> seed=<seed>`), or a `manifest` field for JSON, and the
//! bytes depend only on the config and seed. Exit codes: 0 success, 1 usage
//! or data error, 2 numerical or convergence failure.

pub mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::{self, sensitivity_grid};
use crate::simlab::{run_study, Generator, StudyDesign};
pub use config::{LoadedConfig, RunConfig};
pub use output::Manifest;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "CSCAUSAL_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "cscausal",
    version,
    about = "Corrected-score causal estimators for mismeasured exposures"
)]
pub struct Cli {
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = THREADS_ENV, value_name = "K")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the estimators of a run config.
    Fit { config: PathBuf },
    /// Run a simulation study.
    Simulate {
        /// Design id (sim1, sim2, sim3, reliability_sweep, estimated_sigma,
        /// positivity, multiplicative, two_phase) or a TOML design file.
        design: String,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long = "R", value_name = "R")]
        replicates: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write per-replicate estimates.
        #[arg(long)]
        audit: bool,
        /// Add regression calibration and SIMEX where the design uses them.
        #[arg(long)]
        comparators: bool,
    },
    /// Refit the estimators of a run config over its `[sigma.grid]`.
    Sensitivity { config: PathBuf },
}

const DEFAULT_OUT: &str = "cscausal-out";
const DEFAULT_REPLICATES: usize = 500;
const DEFAULT_SIM_SEED: u64 = 1;

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_numerical() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

pub fn run(cli: &Cli) -> std::result::Result<(), Failure> {
    match &cli.command {
        Command::Fit { config } => cmd_fit(cli, config),
        Command::Simulate {
            design,
            n,
            replicates,
            seed,
            audit,
            comparators,
        } => cmd_simulate(cli, design, *n, *replicates, *seed, *audit, *comparators),
        Command::Sensitivity { config } => cmd_sensitivity(cli, config),
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    if threads == Some(0) {
        return Err(Error::Argument("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Argument(format!("cannot start thread pool: {e}")))
}

fn out_dir(cli: &Cli, config: Option<&LoadedConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| config.and_then(|c| c.config.output.as_ref().map(|o| c.dir.join(o))))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn cmd_fit(cli: &Cli, path: &Path) -> std::result::Result<(), Failure> {
    let loaded = config::load(path)?;
    let cfg = &loaded.config;
    let pool = thread_pool(cli.threads.or(cfg.threads))?;
    let data = cfg.dataset(&loaded.dir)?;
    let sigma = cfg.sigma(&loaded.dir, &data)?;
    let requests = cfg.requests(&data)?;
    let results: Vec<Result<estimators::Estimate>> = pool.install(|| {
        use rayon::prelude::*;
        requests
            .par_iter()
            .map(|(_, r)| estimators::fit(r, &data, &sigma))
            .collect()
    });
    let mut fits = Vec::with_capacity(results.len());
    for ((label, _), r) in requests.iter().zip(results) {
        fits.push((label.clone(), r?));
    }
    let manifest = Manifest::new("fit", &loaded.sha256, cfg.seed, data.n(), cfg.alpha);
    let dir = out_dir(cli, Some(&loaded));
    output::write_fit(&dir, &manifest, &data, &sigma, &fits)?;
    let stalled: Vec<&str> = fits
        .iter()
        .filter(|(_, e)| !e.converged)
        .map(|(l, _)| l.as_str())
        .collect();
    if !stalled.is_empty() {
        return Err(Failure {
            code: 2,
            message: format!("no convergence for {}", stalled.join(", ")),
        });
    }
    Ok(())
}

/// Design file for `simulate`; command-line values override it.
#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignFile {
    generator: Generator,
    #[serde(default)]
    n: Option<usize>,
    #[serde(default)]
    replicates: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    comparators: bool,
}

/// Sample size used by the standard study for `generator`.
pub fn default_n(generator: Generator) -> usize {
    match generator {
        Generator::Sim1 | Generator::Sim2 => 8000,
        Generator::Sim3 | Generator::TwoPhase => 2000,
        _ => 800,
    }
}

fn cmd_simulate(
    cli: &Cli,
    design: &str,
    n: Option<usize>,
    replicates: Option<usize>,
    seed: Option<u64>,
    audit: bool,
    comparators: bool,
) -> std::result::Result<(), Failure> {
    let file = Path::new(design);
    let spec = if file.is_file() {
        let text = std::fs::read_to_string(file).map_err(|source| Error::Io {
            path: file.to_path_buf(),
            source,
        })?;
        toml::from_str::<DesignFile>(&text).map_err(|e| Error::Config(format!("{design}: {e}")))?
    } else {
        DesignFile {
            generator: design.parse()?,
            n: None,
            replicates: None,
            seed: None,
            comparators: false,
        }
    };
    let generator = spec.generator;
    let n = n.or(spec.n).unwrap_or_else(|| default_n(generator));
    let r = replicates.or(spec.replicates).unwrap_or(DEFAULT_REPLICATES);
    let seed = seed.or(spec.seed).unwrap_or(DEFAULT_SIM_SEED);
    let comparators = comparators || spec.comparators;
    let study = StudyDesign::standard(generator, n, r, seed, comparators);
    let pool = thread_pool(cli.threads)?;
    let out = pool.install(|| run_study(&study))?;
    let canonical = format!(
        "simulate generator={} n={n} R={r} seed={seed} comparators={comparators}",
        generator.id()
    );
    let manifest = Manifest::new("simulate", &sha256_hex(canonical.as_bytes()), seed, n, study.alpha);
    let dir = out_dir(cli, None);
    output::write_simulation(&dir, &manifest, &out, audit)?;
    if out.table.warning {
        eprintln!("warning: some estimators failed in more than 5% of replicates");
    }
    Ok(())
}

fn cmd_sensitivity(cli: &Cli, path: &Path) -> std::result::Result<(), Failure> {
    let loaded = config::load(path)?;
    let cfg = &loaded.config;
    let pool = thread_pool(cli.threads.or(cfg.threads))?;
    let data = cfg.dataset(&loaded.dir)?;
    let grid = cfg.sigma_grid()?;
    let requests = cfg.requests(&data)?;
    let sigmas: Vec<_> = grid.iter().map(|(_, s)| s.clone()).collect();
    let mut cells = Vec::new();
    let mut failures = 0;
    for (label, req) in &requests {
        let results = pool.install(|| sensitivity_grid(req, &data, &sigmas));
        for ((scale, _), r) in grid.iter().zip(results) {
            match r {
                Ok(est) if est.converged => cells.push((label.clone(), *scale, est)),
                Ok(_) => {
                    failures += 1;
                    eprintln!("warning: {label} at sigma scale {scale}: no convergence");
                }
                Err(e) => {
                    failures += 1;
                    eprintln!("warning: {label} at sigma scale {scale}: {e}");
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(Failure {
            code: 2,
            message: format!("all {failures} sensitivity cells failed"),
        });
    }
    let manifest = Manifest::new("sensitivity", &loaded.sha256, cfg.seed, data.n(), cfg.alpha);
    output::write_sensitivity(&out_dir(cli, Some(&loaded)), &manifest, &data, &cells)?;
    Ok(())
}
