use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use decolab::cli::{self, ExperimentKind};
use decolab::error::Error;

#[derive(Parser)]
#[command(
    name = "decolab",
    about = "Decoherence laboratory: closed-form and numerical reduced dynamics \
             of a two-level particle coupled to an Ohmic heat bath",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the closed-form density matrices on a grid.
    Evaluate(RunArgs),
    /// Integrate the master equation numerically.
    Evolve(RunArgs),
    /// Integrate numerically and compare against the closed form.
    Compare(RunArgs),
    /// Evaluate the decoherence timescale formulas.
    Timescales(RunArgs),
    /// Repeat an experiment over a list of parameter values.
    Sweep(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Path to the JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory for CSV snapshots, series, and the JSON report.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::Evaluate(_) => ExperimentKind::Evaluate,
            Command::Evolve(_) => ExperimentKind::Evolve,
            Command::Compare(_) => ExperimentKind::Compare,
            Command::Timescales(_) => ExperimentKind::Timescales,
            Command::Sweep(_) => ExperimentKind::Sweep,
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Evaluate(a)
            | Command::Evolve(a)
            | Command::Compare(a)
            | Command::Timescales(a)
            | Command::Sweep(a) => a,
        }
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("DECOLAB_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    let kind = cli.command.kind();
    let args = cli.command.args();
    match execute(kind, args) {
        Ok(report) => {
            println!("{}", report.to_json());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(kind: ExperimentKind, args: &RunArgs) -> decolab::Result<cli::RunReport> {
    let text = std::fs::read_to_string(&args.config)?;
    let config = cli::parse_config(&text)?;
    if config.experiment != kind {
        return Err(Error::ConfigSemantics(format!(
            "config declares experiment '{}' but the subcommand is '{kind}'",
            config.experiment
        )));
    }
    let dir = args
        .output_dir
        .clone()
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from));
    cli::run(&config, dir.as_deref())
}
