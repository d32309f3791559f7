use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kahler_flow::cli::{self, verify, RunConfig, RunOutcome, RunStatus, Suite, EXIT_CONFIG};
use kahler_flow::models::ModelId;
use kahler_flow::Result;

#[derive(Parser)]
#[command(name = "kahler-flow", version, about = "Normalized Kähler-Ricci flow on model surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the flow and write diagnostics.csv and summary.txt.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the output directory of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write a checkpoint here at the end of the run.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run a verification suite over the model catalog.
    Verify {
        /// verify-evolution, verify-chern, verify-bounds or verify-existence.
        #[arg(long)]
        suite: Option<String>,
        /// Parameter overrides; the suite may also be set here.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Continue a run from a checkpoint.
    Resume {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn report(outcome: &RunOutcome) -> i32 {
    for (t, c) in &outcome.failures {
        eprintln!(
            "check failed at t = {t}: {} measured {:e} tolerance {:e}",
            c.name, c.measured, c.tolerance
        );
    }
    match &outcome.status {
        RunStatus::Completed => println!("completed: {} rows", outcome.rows.len()),
        RunStatus::Singular { time, predicted } => {
            println!("singular time {time} (predicted {predicted})")
        }
        RunStatus::AssertionFailed => println!("assertion failure"),
    }
    outcome.exit_code()
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Run { config, out, checkpoint } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            Ok(report(&cli::run(&cfg)?))
        }
        Command::Verify { suite, config } => {
            let mut cfg = match config {
                Some(path) => RunConfig::load(&path)?,
                None => RunConfig::new(ModelId::FlatTorus),
            };
            if let Some(s) = suite {
                cfg.suite = s.parse::<Suite>()?;
            }
            let results = verify(&cfg)?;
            for r in &results {
                println!("{r}");
            }
            Ok(verify::exit_code(&results))
        }
        Command::Resume { checkpoint, config, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            Ok(report(&cli::resume(&checkpoint, &cfg)?))
        }
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let code = match execute(args.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    };
    ExitCode::from(code as u8)
}
