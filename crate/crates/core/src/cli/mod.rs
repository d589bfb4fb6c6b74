//! Command-line front end: `synth`, `classify` and `report` over files.
//!
//! Exit status is 0 on success, 2 for bad input or configuration and 1 for
//! anything else.

mod commands;
mod config;
mod inputs;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{classify_artifacts, cmd_classify, cmd_report, cmd_synth, report_artifacts, Artifacts, ReportKind};
pub use config::{ClassifierSettings, InputPaths, RunConfig};
pub use inputs::resolve as resolve_inputs;

/// Environment variable holding the log filter.
pub const LOG_ENV: &str = "SNO_SCOPE_LOG";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sno-scope",
    version,
    about = "Find and characterize satellite operator traffic in measurement data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic corpus.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        /// Generator spec (JSON); the bundled default when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Multiply every session count by this factor.
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Attribute speed tests to operators and filter them by latency.
    Classify {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Export metric, traceroute or BGP reports.
    Report {
        #[arg(value_enum)]
        which: ReportKind,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Run configuration (JSON); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input files or corpus directories.
    #[arg(long, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Stop at the first malformed record.
    #[arg(long)]
    pub strict_parsing: bool,
    /// Relaxed-filter threshold used when an operator has no strict prefix.
    #[arg(long, value_name = "MS")]
    pub global_floor: Option<f64>,
    /// Sessions a /24 needs before it can pass the strict filter.
    #[arg(long)]
    pub min_tests: Option<usize>,
}

/// Config file first, then flags, then `--input` discovery.
pub fn build_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if common.parallelism.is_some() {
        cfg.parallelism = common.parallelism;
    }
    cfg.strict_parsing |= common.strict_parsing;
    if let Some(f) = common.global_floor {
        cfg.global_floor_ms = f;
    }
    if let Some(n) = common.min_tests {
        cfg.min_tests = n;
    }
    for p in cfg.inputs.all() {
        if !p.exists() {
            return Err(CliError::Input(format!("input not found: {}", p.display())));
        }
    }
    inputs::resolve(&mut cfg.inputs, &common.input)?;
    cfg.validate().map_err(CliError::Input)?;
    Ok(cfg)
}

fn with_pool<T: Send>(parallelism: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = parallelism {
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { common, spec, scale } => {
            let mut cfg = build_config(&common)?;
            if let Some(s) = spec {
                if !s.exists() {
                    return Err(CliError::Input(format!("input not found: {}", s.display())));
                }
                cfg.inputs.spec = Some(s);
            }
            with_pool(cfg.parallelism, || cmd_synth(&cfg, scale))??;
        }
        Command::Classify { common } => {
            let cfg = build_config(&common)?;
            with_pool(cfg.parallelism, || cmd_classify(&cfg))??;
        }
        Command::Report { which, common } => {
            let cfg = build_config(&common)?;
            with_pool(cfg.parallelism, || cmd_report(&cfg, which))??;
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("sno-scope: {e}");
            e.exit_code()
        }
    }
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}
