use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use glideflow_harness::commands::{self, error_exit_code, Status};
use glideflow_harness::{load_config, HarnessError, RunConfig};

#[derive(Parser)]
#[command(name = "glideflow", version, about = "Glide-constrained defect dynamics: scheme runs, inclusion runs and audits")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `run.output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for sampled quantities (overrides `run.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Run the minimising-movement scheme for every configured time step.
    SimulateMms,
    /// Integrate the differential inclusion.
    SimulateInclusion,
    /// Compare scheme runs with the reference solution as the time step shrinks.
    Converge,
    /// Audit the discrete energy-dissipation balance.
    EdiCheck,
    /// Classify points of a circle into source, cross-slip and fine cross-slip.
    Classify,
    /// Evaluate crystalline and dual norms of configured vectors.
    Norms,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::SimulateMms => "simulate-mms",
            Command::SimulateInclusion => "simulate-inclusion",
            Command::Converge => "converge",
            Command::EdiCheck => "edi-check",
            Command::Classify => "classify",
            Command::Norms => "norms",
        }
    }
}

fn execute(cli: &Cli) -> Result<Status, HarnessError> {
    let path = cli.config.as_ref().ok_or_else(|| HarnessError::Invalid {
        field: "--config".into(),
        message: "a configuration file is required".into(),
    })?;
    let mut cfg: RunConfig = load_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    let out = commands::output_dir(&cfg, cli.out.clone());
    log::info!("{} with config {} into {}", cli.command.name(), path.display(), out.display());
    match cli.command {
        Command::SimulateMms => commands::simulate_mms(&cfg, &out),
        Command::SimulateInclusion => commands::simulate_inclusion(&cfg, &out),
        Command::Converge => commands::converge(&cfg, &out),
        Command::EdiCheck => commands::edi_check(&cfg, &out),
        Command::Classify => commands::classify(&cfg, &out),
        Command::Norms => commands::norms(&cfg, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(status) => {
            if status != Status::Success {
                eprintln!("glideflow {}: finished with status {status:?}", cli.command.name());
            }
            ExitCode::from(status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("glideflow {}: {e}", cli.command.name());
            ExitCode::from(error_exit_code(&e) as u8)
        }
    }
}
