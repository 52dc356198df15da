use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use glvortex::harness::{cmd_compare, cmd_effective, cmd_energy, cmd_info, cmd_simulate, ExperimentConfig, Outcome};
use glvortex::GlError;

/// Ginzburg-Landau vortex experiments on closed surfaces.
///
/// Every run is described by one JSON config file; outputs are CSV and
/// JSON files stamped with the config hash.
#[derive(Parser)]
#[command(name = "glvortex", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides the config's `output` (default: out).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Concurrent jobs for ε sweeps and landscape scans.
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Geometry report: χ, genus, area, curvature total, harmonic dimension.
    Info(Common),
    /// GL gradient flow for every ε in the config.
    Simulate(Common),
    /// The limiting vortex ODE.
    Effective(Common),
    /// GL flows against the effective dynamics, with the ε sweep report.
    Compare(Common),
    /// Renormalized energy landscape around one vortex.
    Energy(Common),
}

fn error_json(kind: &str, module: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "module": module, "message": message } }).to_string()
}

fn execute(cmd: Command) -> Result<Outcome, GlError> {
    let (Command::Info(c) | Command::Simulate(c) | Command::Effective(c) | Command::Compare(c) | Command::Energy(c)) = &cmd;
    let cfg = ExperimentConfig::from_path(&c.config)?;
    let out = c.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let jobs = c.jobs.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if jobs == 0 {
        return Err(GlError::Config("--jobs must be at least 1".into()));
    }
    log::info!("config hash {}", cfg.hash());
    match cmd {
        Command::Info(_) => cmd_info(&cfg, &out),
        Command::Simulate(_) => cmd_simulate(&cfg, &out, jobs),
        Command::Effective(_) => cmd_effective(&cfg, &out),
        Command::Compare(_) => cmd_compare(&cfg, &out, jobs),
        Command::Energy(_) => cmd_energy(&cfg, &out, jobs),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GLVORTEX_LOG", "warn")).init();
    glvortex::linalg::use_sequential_kernels();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_json("usage", "cli-harness", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match execute(cli.command) {
        Ok(o) => {
            println!("{}", serde_json::to_string_pretty(&o).expect("outcome serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(e.kind(), e.module(), &e.to_string()));
            ExitCode::from(1)
        }
    }
}
