//! Command-line front end.
//!
//! Exit status: 0 on success, 1 for invalid input, 2 for numerical failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lqo::immersion::{build_ltv, immerse, report, ImmersionOptions};
use lqo::simkit::{run_scenario, simulate_scenario, Scenario};
use lqo::sysmodel::{load_system_with, LoadOptions};
use lqo::Error;

#[derive(Parser)]
#[command(
    name = "lqo",
    version,
    about = "Immersion and observer tools for quadratic-output systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the immersion of a system and write a JSON report.
    Immerse {
        #[arg(long)]
        system: PathBuf,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accept asymmetric output matrices and use their symmetric part.
        #[arg(long)]
        symmetrize: bool,
        /// Absolute singular-value threshold for rank decisions.
        #[arg(long)]
        rank_tol: Option<f64>,
    },
    /// Simulate the plant of a scenario and write a CSV trace.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the observer of a scenario and write a CSV trace.
    Observe {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rank_tol: Option<f64>,
    },
    /// Run seeded internal consistency checks.
    Selftest {
        #[arg(long, default_value_t = 20240611)]
        seed: u64,
    },
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Prints a line, ignoring a closed pipe.
fn stdout_line(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Immerse {
            system,
            out,
            symmetrize,
            rank_tol,
        } => {
            let opts = LoadOptions {
                max_asymmetry: if symmetrize {
                    None
                } else {
                    LoadOptions::default().max_asymmetry
                },
            };
            let loaded = load_system_with(&read(&system)?, &opts)?;
            for (h, r) in loaded.asymmetry.iter().enumerate() {
                if *r > 0.0 {
                    eprintln!("warning: C[{h}] symmetrized, asymmetry {r:.3e}");
                }
            }
            let sys = loaded.system;
            let imm = immerse(&sys, &ImmersionOptions { rank_tol })?;
            let ltv = build_ltv(&sys, &imm)?;
            let rep = report(&sys, &imm, &ltv)?;
            warn_all(&rep.warnings);
            let json = serde_json::to_string_pretty(&rep)?;
            match out {
                Some(p) => write(&p, &json)?,
                None => stdout_line(&json),
            }
        }
        Command::Simulate { scenario, out } => {
            let sc = Scenario::load(&scenario)?;
            let trace = simulate_scenario(&sc)?;
            write(&out, &trace.to_csv()?)?;
        }
        Command::Observe {
            scenario,
            out,
            rank_tol,
        } => {
            let sc = Scenario::load(&scenario)?;
            let run = run_scenario(&sc, &ImmersionOptions { rank_tol })?;
            warn_all(&run.report.warnings);
            write(&out, &run.trace.to_csv()?)?;
            for g in &sc.error_groups {
                let e = run.group_errors(g);
                stdout_line(&format!(
                    "{}: initial {:.6e} final {:.6e}",
                    g.name,
                    e[0],
                    e[e.len() - 1]
                ));
            }
        }
        Command::Selftest { seed } => {
            let ok = lqo::selftest::run(seed, &mut std::io::stdout().lock())?;
            if !ok {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
