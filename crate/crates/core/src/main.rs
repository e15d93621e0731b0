use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use svqlab::experiment::{self, config, Scenario};

/// Stochastic-variational quantization laboratory.
///
/// Thread count follows RAYON_NUM_THREADS; results do not depend on it.
#[derive(Parser)]
#[command(name = "svqlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSV tables plus report.json into --out.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a config without running any numerics.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the available scenarios.
    ListScenarios,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, out } => match experiment::run_file(&config, &out) {
            Ok(report) => {
                for m in &report.metrics {
                    let op = match m.comparison {
                        experiment::Comparison::AtMost => "<=",
                        experiment::Comparison::AtLeast => ">=",
                    };
                    let flag = if m.pass { "PASS" } else { "FAIL" };
                    println!("{flag} {} = {:e} ({op} {:e})", m.name, m.value, m.tolerance);
                }
                println!("report: {}", out.join(experiment::REPORT_FILE).display());
                ExitCode::from(if report.pass { 0 } else { 1 })
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
        Command::Validate { config } => match config::load_and_validate(&config) {
            Ok(cfg) => {
                println!("ok: scenario {} seed {} (config hash {})", cfg.scenario.name(), cfg.seed, cfg.hash());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::ListScenarios => {
            for s in Scenario::ALL {
                println!("{:<20} {}", s.name(), s.summary());
            }
            ExitCode::SUCCESS
        }
    }
}
