//! `rase run --config path [--out dir] [--threads n] [--verify]`
//!
//! Exit codes: 0 all checks pass, 1 a numeric check failed, 2 configuration
//! error, 3 internal error. Errors are printed to stderr as one JSON object.

mod config;
mod experiments;

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{ConfigError, ExperimentConfig};
use experiments::{references, Outcome, RunError, Table};

#[derive(Parser)]
#[command(name = "rase", version, about = "Photon echo and rephased ASE experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Also check commutators and, on small grids, the ODE oracle.
        #[arg(long)]
        verify: bool,
    },
}

struct Failure {
    exit: u8,
    code: &'static str,
    message: String,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure { exit: 2, code: e.code, message: e.message }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => c.into(),
            RunError::Core(c) => {
                use rase_core::Error as E;
                let exit = match c {
                    E::InvalidParameter(_)
                    | E::InvalidGrid(_)
                    | E::InvalidSequence(_)
                    | E::RegimeMismatch { .. }
                    | E::WindowTooShort(_)
                    | E::CapExceeded(_)
                    | E::StepCondition { .. }
                    | E::NotClosed(_)
                    | E::Divergent(_) => 2,
                    _ => 3,
                };
                Failure { exit, code: c.code(), message: c.to_string() }
            }
        }
    }
}

fn io_failure(exit: u8, what: &str, e: impl std::fmt::Display) -> Failure {
    Failure { exit, code: "io", message: format!("{what}: {e}") }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run { config, out, threads, verify } = cli.command;
    match run(&config, out, threads, verify) {
        Ok(pass) => ExitCode::from(if pass { 0 } else { 1 }),
        Err(f) => {
            let report = json!({ "error": f.code, "message": f.message, "exit_code": f.exit });
            eprintln!("{report}");
            ExitCode::from(f.exit)
        }
    }
}

fn run(path: &Path, out: Option<PathBuf>, threads: Option<usize>, verify: bool) -> Result<bool, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(2, "reading config", e))?;
    let cfg = ExperimentConfig::parse(&text)?;
    let out_dir = out
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| ConfigError::new("missing-output", "no output directory: pass --out or set output_dir"))?;
    fs::create_dir_all(&out_dir).map_err(|e| io_failure(2, "creating output directory", e))?;
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure { exit: 3, code: "thread-pool", message: e.to_string() })?;
    }

    let outcome = experiments::run(&cfg, verify)?;
    let hash = cfg.hash();
    write_artifacts(&out_dir, &cfg, &hash, &outcome).map_err(|e| io_failure(3, "writing artifacts", e))?;

    let pass = outcome.checks.iter().all(|c| c.pass);
    for c in &outcome.checks {
        println!(
            "{} {}: value {:.6e}, reference {:.6e} ({} {:.1e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.reference,
            c.kind,
            c.tolerance
        );
    }
    println!("{} {}", cfg.experiment, if pass { "pass" } else { "fail" });
    Ok(pass)
}

fn write_artifacts(dir: &Path, cfg: &ExperimentConfig, hash: &str, o: &Outcome) -> std::io::Result<()> {
    for t in &o.tables {
        write_table(&dir.join(format!("{}.csv", t.name)), hash, t)?;
    }
    let pass = o.checks.iter().all(|c| c.pass);
    let metadata = json!({
        "config_sha256": hash,
        "config": cfg,
        "crate_version": env!("CARGO_PKG_VERSION"),
        "tolerances": cfg.tolerances,
        "references": references(cfg.params.alpha_l()),
        "results": o.results,
        "tables": o.tables.iter().map(|t| format!("{}.csv", t.name)).collect::<Vec<_>>(),
    });
    fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&metadata)? + "\n")?;
    let summary = json!({
        "experiment": cfg.experiment,
        "config_sha256": hash,
        "status": if pass { "pass" } else { "fail" },
        "checks": o.checks,
    });
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

/// CSV with a leading `# config_sha256=...` comment line.
fn write_table(path: &Path, hash: &str, t: &Table) -> std::io::Result<()> {
    let mut f = File::create(path)?;
    writeln!(f, "# config_sha256={hash}")?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(&t.header)?;
    for row in &t.rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
