//! Command-line runner: reads a scenario file, runs one check family (or all
//! of them), and writes CSV artifacts plus `report.txt`.

mod commands;
pub mod config;
pub mod report;

use std::fs;
use std::path::Path;

pub use commands::RunError;
pub use config::{Checks, ConfigError, ScenarioFile};
pub use report::Report;

use suplab::scenario::Dynamics;

/// Exit codes of [`run`].
pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    SolveFpe,
    SolvePorous,
    Simulate,
    Superposition,
    Flow,
    Domination,
    Dirichlet,
    Represent,
    Lyapunov,
    Jumps,
    Resolvent,
    Capacity,
    Energy,
    All,
}

/// Runs `cmd` on a parsed scenario, writing artifacts into `out`.
pub fn execute(cmd: Command, file: &ScenarioFile, out: &Path) -> Result<Report, RunError> {
    fs::create_dir_all(out)?;
    fs::write(out.join("effective.scenario"), file.to_text())?;
    let ctx = commands::Ctx { file, out };
    commands::validate(&ctx)?;
    let sc = &file.scenario;
    let linear = matches!(sc.dynamics, Dynamics::Linear(_));
    let steps: Vec<Command> = match cmd {
        Command::All => {
            let mut v = vec![
                if linear { Command::SolveFpe } else { Command::SolvePorous },
                Command::Simulate,
                Command::Superposition,
                Command::Flow,
                Command::Domination,
                Command::Energy,
            ];
            if sc.dirichlet.is_some() {
                v.push(Command::Dirichlet);
            }
            v.push(Command::Represent);
            if sc.lyapunov.is_some() {
                v.push(Command::Lyapunov);
            }
            if sc.jumps.is_some() {
                v.push(Command::Jumps);
                if linear {
                    v.push(Command::Resolvent);
                }
            }
            if sc.capacity.is_some() && linear {
                v.push(Command::Capacity);
            }
            v
        }
        c => vec![c],
    };
    let mut report = Report::default();
    for c in steps {
        report.extend(match c {
            Command::SolveFpe => commands::solve_fpe(&ctx)?,
            Command::SolvePorous => commands::solve_porous(&ctx)?,
            Command::Simulate => commands::simulate(&ctx)?,
            Command::Superposition => commands::superposition(&ctx)?,
            Command::Flow => commands::flow(&ctx)?,
            Command::Domination => commands::domination(&ctx)?,
            Command::Dirichlet => commands::dirichlet(&ctx)?,
            Command::Represent => commands::represent(&ctx)?,
            Command::Lyapunov => commands::lyapunov(&ctx)?,
            Command::Jumps => commands::jumps(&ctx)?,
            Command::Resolvent => commands::resolvent(&ctx)?,
            Command::Capacity => commands::capacity(&ctx)?,
            Command::Energy => commands::energy(&ctx)?,
            Command::All => unreachable!(),
        });
    }
    fs::write(out.join("report.txt"), report.to_string())?;
    Ok(report)
}

/// Reads the scenario, runs the command and maps the outcome to an exit
/// code; errors are printed to stderr.
pub fn run(cmd: Command, scenario: &Path, out: &Path) -> i32 {
    let outcome = fs::read_to_string(scenario)
        .map_err(RunError::from)
        .and_then(|text| ScenarioFile::parse(&text).map_err(RunError::from))
        .and_then(|file| execute(cmd, &file, out));
    match outcome {
        Ok(report) => {
            print!("{report}");
            if report.passed() {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
