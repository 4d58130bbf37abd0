use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qdcav_cli::config::{load_config, RunConfig};
use qdcav_core::Scenario;

/// Simulates quantum-dot emission through a low-Q cavity and extracts the
/// apparent cavity line over detuning or temperature sweeps.
///
/// Energies are in meV and temperatures in K, in configuration files and
/// outputs alike. See config-reference.md for every configuration key.
#[derive(Debug, Parser)]
#[command(name = "qdcav", version)]
struct Args {
    /// Configuration file (`section.key = value` lines, or a config-echo.json)
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory, overriding `output.dir`
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads (default: available parallelism)
    #[arg(long)]
    threads: Option<usize>,

    /// Write the simulated spectrum of every sweep point
    #[arg(long)]
    emit_spectra: bool,

    /// Preset supplying the defaults: fig3a, fig3bcd or fig2ghi
    #[arg(long, default_value = "fig3a")]
    scenario: Scenario,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let mut cfg = match &args.config {
        Some(path) => match load_config(path, args.scenario) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => RunConfig::from_scenario(args.scenario),
    };
    if let Some(out) = args.out {
        cfg.output.dir = out;
    }
    cfg.output.emit_spectra |= args.emit_spectra;
    if args.threads == Some(0) {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(2);
    }
    match qdcav_cli::run(&cfg, args.threads) {
        Ok(summary) => {
            if summary.failures > 0 {
                eprintln!("{} of {} points could not be fitted", summary.failures, summary.points);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
