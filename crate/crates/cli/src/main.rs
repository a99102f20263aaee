use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use kwe_core::io::RunConfig;
use kwe_core::KweError;

mod commands;

#[derive(Parser, Debug)]
#[command(name = "kwe", version, about = "Isotropic 4-wave kinetic equation: KZ checks, fluxes, linearization, forced steady states")]
struct Cli {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides out_dir in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for data-parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Pass/fail tolerance override for the selected check.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Stationarity, flux constancy and Zakharov roots of the KZ spectrum.
    VerifyKz,
    /// Mass and energy flux profile of a spectrum CSV (omega,f).
    Flux {
        spectrum: PathBuf,
        /// Evaluate every k-th grid node.
        #[arg(long, default_value_t = 10)]
        stride: usize,
    },
    /// Symbol scan m(b + i tau) of the linearized operator.
    Symbol,
    /// Winding number of the symbol around the strip rectangle.
    Winding,
    /// Forced stationary solution for the configured bump.
    Solve,
    /// Time integration from f0 = A / (1 + w)^3.
    Evolve,
    /// Estimate of c1 from several forcing strengths.
    C1,
}

/// Exit status: 0 pass, 1 usage or configuration, 2 tolerance failure.
pub enum Outcome {
    Pass,
    Fail(String),
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(t) = cli.tol {
        cfg.tol = Some(t);
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn is_usage(e: &anyhow::Error) -> bool {
    match e.downcast_ref::<KweError>() {
        Some(KweError::Config(_) | KweError::Parse(_) | KweError::Io(_) | KweError::Csv(_) | KweError::InvalidRange(_)) => true,
        Some(_) => false,
        None => true,
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
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let out = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    match run(&cli.cmd, &cfg, &out) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail(msg)) => {
            eprintln!("tolerance failure: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 1 } else { 2 })
        }
    }
}

fn run(cmd: &Cmd, cfg: &RunConfig, out: &Path) -> anyhow::Result<Outcome> {
    match cmd {
        Cmd::VerifyKz => commands::verify_kz(cfg, out),
        Cmd::Flux { spectrum, stride } => commands::flux(cfg, out, spectrum, *stride),
        Cmd::Symbol => commands::symbol(cfg, out),
        Cmd::Winding => commands::winding(cfg, out),
        Cmd::Solve => commands::solve(cfg, out),
        Cmd::Evolve => commands::evolve(cfg, out),
        Cmd::C1 => commands::c1(cfg, out),
    }
}
