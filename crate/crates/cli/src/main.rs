use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cogstab::experiments::{
    cmd_analyze, cmd_optimize, cmd_simulate, cmd_sweep, cmd_validate, default_jobs, Battery, Overrides, RunError,
};

/// Stability and throughput of a primary link shared with random-access
/// secondary users.
#[derive(Parser)]
#[command(name = "cogstab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form report for one configuration (JSON).
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Slot-level simulation of one configuration (JSON).
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Parameter sweep from an experiment spec (CSV).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Optimal secondary throughput over (q, P0) per primary load (CSV).
    Optimize {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated values of lambda_p / mu_p_max; overrides the spec.
        #[arg(long = "lambda-p", value_delimiter = ',')]
        lambda_p: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<u32>,
    },
    /// Analytic-versus-simulation check battery (JSON lines).
    Validate {
        #[arg(long, default_value = "standard")]
        battery: Battery,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<u32>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    slots: Option<u64>,
    #[arg(long)]
    replications: Option<u32>,
    #[arg(long)]
    jobs: Option<u32>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, slots: self.slots, replications: self.replications }
    }
}

fn jobs(j: Option<u32>) -> usize {
    j.map_or_else(default_jobs, |j| j.max(1) as usize)
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), RunError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| RunError::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Analyze { config, out } => emit(&cmd_analyze(&config)?, out.as_deref()),
        Command::Simulate { config, run } => {
            emit(&cmd_simulate(&config, &run.overrides(), jobs(run.jobs))?, run.out.as_deref())
        }
        Command::Sweep { config, run } => {
            let (text, named) = cmd_sweep(&config, &run.overrides(), jobs(run.jobs))?;
            emit(&text, run.out.or(named).as_deref())
        }
        Command::Optimize { config, lambda_p, out, jobs: j } => {
            let (text, named) = cmd_optimize(&config, lambda_p, jobs(j))?;
            emit(&text, out.or(named).as_deref())
        }
        Command::Validate { battery, seed, out, jobs: j } => {
            let (text, status) = cmd_validate(battery, seed, jobs(j));
            emit(&text, out.as_deref())?;
            status
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cogstab: {e}");
            match e {
                RunError::Model(cogstab::Error::InfeasiblePrimary { .. }) => eprintln!(
                    "cogstab: the primary load is at or above its interference-free service rate; no secondary setting keeps it stable"
                ),
                RunError::Model(cogstab::Error::Unstable { .. }) => eprintln!(
                    "cogstab: the primary queue is unstable at these secondary settings; lower q or P0 (see `analyze` constraints)"
                ),
                _ => {}
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
