use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use dualghost::config::ExperimentConfig;
use dualghost::experiment;

#[derive(Parser)]
#[command(
    name = "dualghost",
    version,
    about = "Dual-arm ghost imaging simulation and reconstruction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML). Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an acquisition and write the accumulated images.
    Simulate(Common),
    /// Simulate and reconstruct with and without the object-arm image.
    Reconstruct(Common),
    /// Write the photon-gain surface.
    Gain(Common),
    /// Run the oracle checks; exit code is nonzero on any failure.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Scale the analytic covariance by (1 + X) to exercise the validator.
        #[arg(long, default_value_t = 0.0)]
        perturb_cov: f64,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, u64, PathBuf)> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.simulation.seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir());
    Ok((cfg.clone(), cfg.simulation.seed, out))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate(common) => {
            let (cfg, seed, out) = load(&common)?;
            let sim = experiment::cmd_simulate(&cfg, seed, &out)?;
            println!(
                "simulated {} frames: {} object-arm counts, {} coincidences -> {}",
                sim.frames.len(),
                sim.total.xi0.iter().sum::<u64>(),
                sim.total.xi1.iter().sum::<u64>(),
                out.display()
            );
        }
        Command::Reconstruct(common) => {
            let (cfg, seed, out) = load(&common)?;
            for r in experiment::cmd_reconstruct(&cfg, seed, &out)? {
                println!(
                    "{:6} tau={:.2} squared_error={:.4} zeroed={}",
                    r.variant.label(),
                    r.tau,
                    r.squared_error,
                    r.zeroed
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Gain(common) => {
            let (cfg, _, out) = load(&common)?;
            let table = experiment::cmd_gain(&cfg, &out)?;
            println!(
                "wrote {} grid points to {}",
                table.len(),
                out.join("gain_surface.csv").display()
            );
        }
        Command::Validate {
            common,
            perturb_cov,
        } => {
            let (cfg, _, out) = load(&common)?;
            let report = experiment::cmd_validate(&cfg, perturb_cov)?;
            print!("{}", report.render());
            if common.out.is_some() || common.config.is_some() {
                std::fs::create_dir_all(&out)?;
                experiment::write_validation_report(&out.join("validation.txt"), &report)?;
            }
            if !report.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
