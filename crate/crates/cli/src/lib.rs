//! Command-line harness: reads an INI run configuration, runs one
//! experiment and writes CSV, JSON and SVG outputs with a manifest.

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::Status;
use config::{ConfigError, RunConfig};
use output::{unix_now, IoFailure, OutDir, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_INCONCLUSIVE: i32 = 4;
pub const EXIT_FAIL: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "fou", version, about = "Drift estimation experiments for fractional Ornstein-Uhlenbeck models")]
pub struct Cli {
    /// INI run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads; overrides `workers` in the config.
    #[arg(long, global = true, env = "FOU_WORKERS", value_name = "N")]
    pub workers: Option<usize>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Draw observation paths.
    Simulate,
    /// Moment estimates from simulated or stored paths.
    Estimate,
    /// Cumulants of the second-chaos statistic over sample sizes.
    Cumulants,
    /// Kolmogorov distance to the normal limit at one sample size.
    Kolmogorov,
    /// Kolmogorov distances over sample sizes with a fitted rate.
    RateSweep,
    /// Covariance and integral bound audits.
    BoundAudit,
    /// Mixed-partial bound of a noise kernel on a grid.
    KernelsCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::Cumulants => "cumulants",
            Command::Kolmogorov => "kolmogorov",
            Command::RateSweep => "rate-sweep",
            Command::BoundAudit => "bound-audit",
            Command::KernelsCheck => "kernels-check",
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Io(String),
    Numeric(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Io(_) => EXIT_IO,
            Failure::Numeric(_) => EXIT_NUMERIC,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Io(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<IoFailure> for Failure {
    fn from(e: IoFailure) -> Self {
        Failure::Io(e.0)
    }
}

impl From<fou_core::Error> for Failure {
    fn from(e: fou_core::Error) -> Self {
        match e {
            fou_core::Error::Domain(_) => Failure::Usage(e.to_string()),
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        None => RunConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            RunConfig::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
        }
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<i32, Failure> {
    let started = unix_now();
    let cfg = load(cli)?;
    let seed = cfg.seed.unwrap_or(0);
    let workers = match cfg.workers {
        Some(0) => return Err(Failure::Usage("workers must be at least 1".into())),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let out_path = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::Io(format!("worker pool: {e}")))?;
    let mut out = OutDir::create(&out_path)?;
    let status = pool.install(|| match cli.command {
        Command::Simulate => commands::simulate(&cfg, seed, &mut out),
        Command::Estimate => commands::estimate(&cfg, seed, &mut out),
        Command::Cumulants => commands::cumulants(&cfg, seed, &mut out),
        Command::Kolmogorov => commands::kolmogorov(&cfg, seed, &mut out),
        Command::RateSweep => commands::rate(&cfg, seed, &mut out),
        Command::BoundAudit => commands::audit(&cfg, &mut out),
        Command::KernelsCheck => commands::kernels(&cfg, &mut out),
    })?;
    let code = match status {
        Status::Ok => EXIT_OK,
        Status::Inconclusive => EXIT_INCONCLUSIVE,
        Status::Fail => EXIT_FAIL,
    };
    let snapshot = RunConfig {
        seed: Some(seed),
        workers: Some(workers),
        out: Some(out_path),
        ..cfg
    };
    out.finish(RunManifest {
        tool: "fou",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cli.command.name().into(),
        seed,
        workers,
        config: snapshot.to_ini(),
        started_unix: started,
        finished_unix: unix_now(),
        exit_code: code,
        files: Vec::new(),
    })?;
    Ok(code)
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => {
            match code {
                EXIT_INCONCLUSIVE => eprintln!("verdict: inconclusive"),
                EXIT_FAIL => eprintln!("verdict: FAIL"),
                _ => {}
            }
            code
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}
