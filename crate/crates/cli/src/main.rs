use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use srp_cli::commands;
use srp_cli::config::{FitChoice, LatticeChoice};
use srp_cli::validate::{run_suite, CORRUPT_ACCEPTANCE_SCALE};
use srp_cli::{ExperimentConfig, Overrides, Result};

#[derive(Debug, Parser)]
#[command(name = "srp", version, about = "Spatial random permutations on periodic lattices")]
struct Cli {
    /// TOML configuration file; flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true, value_parser = parse_lattice)]
    lattice: Option<LatticeChoice>,
    /// Side length of the torus.
    #[arg(long = "L", global = true)]
    side: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Continue `simulate` from this checkpoint.
    #[arg(long, global = true)]
    resume: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run chains and write traces, samples and checkpoints.
    Simulate,
    /// Estimate the cycle-length tail nu(K).
    NuCurve,
    /// Box-counting dimension of the longest cycle, or of a calibration set.
    Boxdim,
    /// Fit a model to a CSV table.
    Fit {
        #[arg(long, value_enum)]
        model: Option<FitChoice>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run the exact-enumeration checks.
    Validate {
        /// Build the kernels with a slightly wrong acceptance exponent.
        #[arg(long)]
        corrupt_acceptance: bool,
    },
    /// Exact marginals on a torus of at most nine sites.
    Enumerate,
}

fn parse_lattice(s: &str) -> std::result::Result<LatticeChoice, String> {
    match s {
        "square" => Ok(LatticeChoice::Square),
        "triangular" => Ok(LatticeChoice::Triangular),
        other => Err(format!("expected 'square' or 'triangular', got '{other}'")),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    config.apply(&Overrides {
        seed: cli.seed,
        alpha: cli.alpha,
        lattice: cli.lattice,
        side: cli.side,
        out: cli.out.clone(),
        workers: cli.workers,
    });
    Ok(config)
}

fn run(cli: Cli) -> Result<bool> {
    if let Command::Validate { corrupt_acceptance } = cli.command {
        let scale = if corrupt_acceptance { CORRUPT_ACCEPTANCE_SCALE } else { 1.0 };
        let checks = run_suite(scale)?;
        for c in &checks {
            println!("{c}");
        }
        let failed = checks.iter().filter(|c| !c.passed).count();
        println!("{} checks, {failed} failed", checks.len());
        return Ok(failed == 0);
    }
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::Simulate => {
            for s in commands::simulate(&config, cli.resume.as_deref())? {
                println!("cell {} alpha={} sweeps={} samples={}", s.index, s.alpha, s.sweeps, s.samples);
            }
        }
        Command::NuCurve => {
            for (alpha, curve) in commands::nu_curve(&config)? {
                println!("alpha={alpha}: {} thresholds, {} samples", curve.thresholds.len(), curve.sample_count);
            }
        }
        Command::Boxdim => {
            if let Some(set) = config.boxdim.calibration {
                let r = commands::calibrate(set, config.lattice.side, config.boxdim.min_box_side)?;
                commands::boxdim(&config)?;
                println!("calibration {set:?}: slope {:.4} (expected {:.4})", r.curve.slope, r.expected);
            } else {
                for e in commands::boxdim(&config)? {
                    println!("alpha={}: d = {:.4} +- {:.4} ({} of {} samples)", e.alpha, e.mean, e.std_dev, e.used(), e.samples.len());
                }
            }
        }
        Command::Fit { model, input } => {
            if model.is_some() {
                config.fit.model = model;
            }
            if input.is_some() {
                config.fit.input = input;
            }
            print!("{}", commands::fit(&config)?);
        }
        Command::Enumerate => {
            let e = commands::enumerate(&config)?;
            println!("{} permutations, Z = {}", e.len(), e.partition_function());
        }
        Command::Validate { .. } => unreachable!("handled above"),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
