//! Command-line front end. Exit codes: 0 success, 1 usage/configuration
//! error, 2 internal invariant violation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use depp_sim::runner::{ExperimentKind, RunConfig};
use depp_sim::{parse_config, run, BellMixtureParams, DriftParams, PdcParams, SimError};

#[derive(Parser)]
#[command(
    name = "depp",
    about = "Exact simulator for deterministic polarization-entanglement purification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stage-by-stage circuit trace of the ideal input
    Trace(CommonArgs),
    /// Single-pair purification under Bell-diagonal noise and path drift
    Purify(CommonArgs),
    /// Lossy down-conversion pipeline with both fidelity accountings
    Pdc(CommonArgs),
    /// Parameter sweep (bit-flip rate, or emission/loss grid)
    Sweep(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Weight of the identity (Φ+) channel branch
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the phase-flip (Φ−) channel branch
    #[arg(long)]
    beta: Option<f64>,
    /// Weight of the bit-flip (Ψ+) channel branch
    #[arg(long)]
    delta: Option<f64>,
    /// Weight of the combined-flip (Ψ−) channel branch
    #[arg(long)]
    eta: Option<f64>,
    /// Path-drift phase in radians
    #[arg(long)]
    phi: Option<f64>,
    /// Pair-emission probability of the source
    #[arg(long)]
    p: Option<f64>,
    /// Per-photon loss probability
    #[arg(long)]
    m: Option<f64>,
    /// Per-pair bit-flip probability
    #[arg(long)]
    e: Option<f64>,
}

fn build_config(kind: ExperimentKind, args: &CommonArgs) -> Result<RunConfig, SimError> {
    let mut config = match &args.config {
        Some(path) => parse_config(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    config.kind = kind;
    if args.alpha.is_some() || args.beta.is_some() || args.delta.is_some() || args.eta.is_some() {
        config.noise = BellMixtureParams::new(
            args.alpha.unwrap_or(config.noise.alpha),
            args.beta.unwrap_or(config.noise.beta),
            args.delta.unwrap_or(config.noise.delta),
            args.eta.unwrap_or(config.noise.eta),
        )?;
    }
    if let Some(phi) = args.phi {
        config.drift = DriftParams::new(phi)?;
    }
    if let Some(p) = args.p {
        config.pdc = PdcParams::new(p, config.pdc.r, config.pdc.pump_phase)?;
    }
    if let Some(e) = args.e {
        if !(0.0..=1.0).contains(&e) {
            return Err(SimError::InvalidParameter(format!(
                "--e must be in [0, 1], got {e}"
            )));
        }
        config.e = e;
    }
    if let Some(m) = args.m {
        if !(0.0..=1.0).contains(&m) {
            return Err(SimError::InvalidParameter(format!(
                "--m must be in [0, 1], got {m}"
            )));
        }
        config.m = m;
    }
    if args.out.is_some() {
        config.out = args.out.clone();
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help/--version land here with a zero-exit error kind
            let code = if err.exit_code() == 0 { 0 } else { 1 };
            let _ = err.print();
            return ExitCode::from(code as u8);
        }
    };
    let (kind, args) = match &cli.command {
        Command::Trace(a) => (ExperimentKind::Trace, a),
        Command::Purify(a) => (ExperimentKind::Purify, a),
        Command::Pdc(a) => (ExperimentKind::Pdc, a),
        Command::Sweep(a) => (ExperimentKind::Sweep, a),
    };
    let config = match build_config(kind, args) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
    };
    match run(&config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err @ (SimError::Config(_) | SimError::InvalidParameter(_) | SimError::Io(_))) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
        Err(err) => {
            eprintln!("internal error: {err}");
            ExitCode::from(2)
        }
    }
}
