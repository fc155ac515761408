use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use gsflow_cli::{run, Invocation, RunError};

#[derive(Parser)]
#[command(
    name = "gsflow",
    version,
    about = "Numerical laboratory for semilinear parabolic gradient flows"
)]
struct Cli {
    /// Experiment configuration (TOML sections); see configs/ for examples.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's task.out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed (overrides the config's task.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for `verify`; other tasks are single-process.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    task: Option<Task>,
}

#[derive(Subcommand, Clone, Copy)]
enum Task {
    /// Shoot the radial stationary profile and report its decay law.
    GroundState,
    /// Time-step the flow; optionally fit bubbles to snapshots and the decay rate.
    Flow,
    /// Best multi-bubble fit to constructed initial data.
    Fit,
    /// Eigenvalues, pairings, and coercivity of the linearized operator.
    Spectrum,
    /// Bisect the scaling threshold between vanishing and blow-up.
    Threshold,
    /// Separating-direction certificate for a point set.
    Separate,
    /// Run the full acceptance suite; nonzero exit on any failure.
    Verify,
}

impl Task {
    fn name(self) -> &'static str {
        match self {
            Task::GroundState => "ground-state",
            Task::Flow => "flow",
            Task::Fit => "fit",
            Task::Spectrum => "spectrum",
            Task::Threshold => "threshold",
            Task::Separate => "separate",
            Task::Verify => "verify",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let inv = Invocation {
        task: cli.task.map(|t| t.name().to_string()),
        config: cli.config,
        out: cli.out,
        seed: cli.seed,
        threads: cli.threads,
    };
    match run(&inv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(RunError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
