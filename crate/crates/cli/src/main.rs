use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod error;
mod io;

use error::CliError;

/// Faux-human search-and-rescue trajectories and rescuer intent prediction.
#[derive(Debug, Parser)]
#[command(name = "rescue-mind", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset of faux-human trajectories.
    GenData(GenDataArgs),
    /// Train a neural predictor on a dataset.
    Train(TrainArgs),
    /// Compare predictors on a dataset.
    Evaluate(EvaluateArgs),
    /// Stream predictions at every decision point of one trajectory.
    Predict(PredictArgs),
    /// Pretty-print a trajectory's events and decision points.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct MapArgs {
    /// `default` or a path to a map-spec document.
    #[arg(long)]
    map: Option<String>,
    /// Named perturbation set of the map.
    #[arg(long)]
    perturbations: Option<String>,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[command(flatten)]
    map: MapArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of trajectories.
    #[arg(long)]
    count: Option<usize>,
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Time2vec,
    Decay,
    Ode,
    Transformer,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    model: ModelKind,
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint path; the loss log is written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TriageScopeArg {
    All,
    AfterEvidence,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    map: MapArgs,
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated: evidence, baseline, neural, neural:<time2vec|decay|ode|transformer>.
    #[arg(long, default_value = "evidence,neural,baseline")]
    methods: String,
    /// Neural checkpoint; repeat for several models.
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
    /// Delimited report path; a JSON report is written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed of the random baselines.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = TriageScopeArg::All)]
    triage_scope: TriageScopeArg,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PredictMethod {
    Evidence,
    Neural,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PredictTask {
    Triage,
    Location,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    map: MapArgs,
    #[arg(long, value_enum)]
    method: PredictMethod,
    #[arg(long, value_enum, default_value_t = PredictTask::Triage)]
    task: PredictTask,
    /// Trajectory log file.
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// JSON-lines output; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[command(flatten)]
    map: MapArgs,
    #[arg(long)]
    trajectory: PathBuf,
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
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Predict(a) => commands::predict(a),
        Command::Inspect(a) => commands::inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e {
                CliError::Usage(_) => "usage error",
                CliError::Data(_) => "data error",
                CliError::Divergence(_) => "numeric divergence",
            };
            eprintln!("rescue-mind: {kind}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
