use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use exclusion_harness::{run, ExperimentConfig, ExperimentKind, RunOptions};

#[derive(Parser)]
#[command(name = "exclusion", version, about = "Simulation, hydrodynamics and large deviations of exclusion processes with window reservoirs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run replica ensembles and record observables.
    Simulate(Common),
    /// Solve the hydrodynamic equation, or its tilted version.
    Pde(Common),
    /// List stationary profiles.
    Stationary(Common),
    /// Compare ensemble means with the hydrodynamic equation.
    HydroCompare(Common),
    /// Compare tilted ensemble means with the perturbed equation.
    TiltCompare(Common),
    /// Rate functional diagnostics.
    LdpCheck(Common),
    /// Grid refinement of the solver and Dynkin martingale scaling.
    ConvergenceStudy(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::Simulate(c) => (ExperimentKind::Simulate, c),
        Command::Pde(c) => (ExperimentKind::Pde, c),
        Command::Stationary(c) => (ExperimentKind::Stationary, c),
        Command::HydroCompare(c) => (ExperimentKind::HydroCompare, c),
        Command::TiltCompare(c) => (ExperimentKind::TiltCompare, c),
        Command::LdpCheck(c) => (ExperimentKind::LdpCheck, c),
        Command::ConvergenceStudy(c) => (ExperimentKind::ConvergenceStudy, c),
    };
    let cfg = match ExperimentConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", common.config.display());
            return ExitCode::from(1);
        }
    };
    let opts = RunOptions { out: common.out, seed: common.seed, threads: common.threads };
    match run(kind, cfg, &opts) {
        Ok(r) => {
            for a in &r.manifest.assertions {
                println!("{} {}{}", if a.passed { "PASS" } else { "FAIL" }, a.name, if a.detail.is_empty() { String::new() } else { format!(": {}", a.detail) });
            }
            println!("wrote {}", r.out.display());
            if r.manifest.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
