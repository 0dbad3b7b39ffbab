//! Command-line runner: `ppa run <config> [--only ...] [--out dir] [--refine n]`.
//!
//! Exit status 0 when every row is within tolerance, 1 on a tolerance
//! failure, 2 on a config or argument error, 3 on a precondition failure.

pub mod config;
pub mod experiments;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::ppa::PpaReport;
use crate::{exec, Error};

pub use config::Scenario;
pub use experiments::run_scenario;

#[derive(Parser, Debug)]
#[command(name = "ppa", version, about = "Perturbative-agreement test batteries on 1+1D lattice backgrounds")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run the experiments of a scenario file and write JSON and CSV reports.
    Run {
        config: PathBuf,
        /// comma-separated experiment names, replacing run.experiments
        #[arg(long)]
        only: Option<String>,
        /// output directory, replacing output.dir
        #[arg(long)]
        out: Option<PathBuf>,
        /// use n rungs of the refinement ladder, multiples of its first entry
        #[arg(long)]
        refine: Option<usize>,
    },
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => EXIT_CONFIG,
        _ => EXIT_PRECONDITION,
    }
}

pub fn write_reports(rep: &PpaReport, dir: &Path) -> crate::Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let json = dir.join(format!("{}.json", rep.scenario));
    let csv = dir.join(format!("{}.csv", rep.scenario));
    std::fs::write(&json, rep.to_json())?;
    std::fs::write(&csv, rep.to_csv())?;
    Ok((json, csv))
}

/// Parse the scenario and apply command-line overrides.
pub fn load(config: &Path, only: Option<&str>, out: Option<&Path>, refine: Option<usize>) -> crate::Result<Scenario> {
    let text = std::fs::read_to_string(config).map_err(|e| Error::Config { line: 0, msg: format!("{}: {e}", config.display()) })?;
    let mut sc = Scenario::parse(&text)?;
    if let Some(o) = only {
        sc.experiments = config::experiments(o).map_err(|msg| Error::Config { line: 0, msg: format!("--only: {msg}") })?;
    }
    if let Some(o) = out {
        sc.out_dir = o.display().to_string();
    }
    if let Some(n) = refine {
        if n < 2 {
            return Err(Error::Config { line: 0, msg: "--refine needs at least 2 rungs".into() });
        }
        let base = sc.refinement.ladder[0];
        sc.refinement.ladder = (1..=n).map(|k| k * base).collect();
    }
    Ok(sc)
}

pub fn main() -> i32 {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    exec::init_threads();
    let Cmd::Run { config, only, out, refine } = args.cmd;
    let sc = match load(&config, only.as_deref(), out.as_deref(), refine) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return exit_code(&e);
        }
    };
    let rep = match run_scenario(&sc, None) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    for r in &rep.residuals {
        let tol = r.tol.map(|t| format!("{t:.1e}")).unwrap_or_else(|| "-".into());
        let mark = if r.tol.is_none() { "info" } else if r.pass { "ok" } else { "FAIL" };
        println!("{:<40} {:>12.3e} tol {:>8}  {mark}", r.name, r.magnitude(), tol);
    }
    match write_reports(&rep, Path::new(&sc.out_dir)) {
        Ok((j, c)) => eprintln!("wrote {} and {}", j.display(), c.display()),
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PRECONDITION;
        }
    }
    if rep.passed() {
        EXIT_OK
    } else {
        EXIT_TOLERANCE
    }
}
