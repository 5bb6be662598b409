use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use suplab_cli::{run, Command, EXIT_CONFIG};

/// Fokker-Planck / superposition verification runner.
#[derive(Parser)]
#[command(name = "suplab", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Scenario file (`section.key = value` lines).
    scenario: PathBuf,
    /// Output directory for CSVs, `report.txt` and `effective.scenario`.
    out: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Ok(v) = std::env::var("SUPLAB_THREADS") {
        let n = match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                eprintln!("error: SUPLAB_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(EXIT_CONFIG as u8);
            }
        };
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("thread pool is configured once");
    }
    ExitCode::from(run(args.command, &args.scenario, &args.out) as u8)
}
