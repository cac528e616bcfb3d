//! `cwc`: train, compress, sweep and verify from the command line.
//!
//! Exit codes: 0 success, 1 argument or config error, 2 runtime failure,
//! 3 theory verification failure.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use report::Format;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
    Verification(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Verification(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) | CliError::Verification(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "cwc",
    version,
    about = "Train, prune, quantize and code compressible network weights"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Common {
    /// Flat TOML configuration; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Output {
    /// Report path; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Report format: csv or json (one object per line).
    #[arg(long)]
    format: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint and an epoch log.
    Train {
        #[command(flatten)]
        common: Common,
        /// Fixed compressibility weight (disables the default ramp).
        #[arg(long)]
        lambda: Option<f64>,
        /// Penalty mode: concatenated or per_layer.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Prune, quantize and code a checkpoint, then report the ratio.
    Compress {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        sparsity: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        /// mask_only, masked or zero_cluster.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        eval_data: Option<PathBuf>,
        /// Where to write the compressed artifact.
        #[arg(long)]
        artifact: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Train and compress over the Cartesian product of the configured grids.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        sparsity: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        mode: Option<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Check the critical-point results numerically.
    VerifyTheory {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dimension: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Write the reference Gaussian-mixture dataset (.csv or tensor file).
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    Ok(cfg)
}

fn apply_output(cfg: &mut RunConfig, output: Output) -> Result<Format, CliError> {
    if output.report.is_some() {
        cfg.report = output.report;
    }
    if output.format.is_some() {
        cfg.format = output.format;
    }
    Format::parse(cfg.format.as_deref().unwrap_or("csv"))
}

fn set<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train {
            common,
            lambda,
            mode,
            data,
            checkpoint,
            log,
            epochs,
        } => {
            let mut cfg = load(&common)?;
            if lambda.is_some() {
                cfg.lambda = lambda;
                cfg.lambda_increment = None;
            }
            set(&mut cfg.loss_mode, mode);
            set(&mut cfg.data, data);
            set(&mut cfg.checkpoint, checkpoint);
            set(&mut cfg.log, log);
            set(&mut cfg.epochs, epochs);
            commands::train(&cfg)
        }
        Command::Compress {
            common,
            checkpoint,
            sparsity,
            k,
            mode,
            eval_data,
            artifact,
            output,
        } => {
            let mut cfg = load(&common)?;
            set(&mut cfg.sparsity, sparsity);
            set(&mut cfg.k, k);
            set(&mut cfg.mode, mode);
            set(&mut cfg.artifact, artifact);
            let format = apply_output(&mut cfg, output)?;
            commands::compress(
                &cfg,
                &commands::CompressArgs {
                    checkpoint,
                    eval_data,
                    format,
                },
            )
        }
        Command::Sweep {
            common,
            lambda,
            sparsity,
            k,
            mode,
            output,
        } => {
            let mut cfg = load(&common)?;
            set(&mut cfg.lambda, lambda);
            set(&mut cfg.sparsity, sparsity);
            set(&mut cfg.k, k);
            set(&mut cfg.mode, mode);
            let format = apply_output(&mut cfg, output)?;
            commands::sweep(&cfg, format)
        }
        Command::VerifyTheory {
            common,
            dimension,
            trials,
        } => {
            let mut cfg = load(&common)?;
            set(&mut cfg.dimension, dimension);
            set(&mut cfg.trials, trials);
            commands::verify(&cfg)
        }
        Command::GenData { out, samples, seed } => commands::gen_data(&out, samples, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
