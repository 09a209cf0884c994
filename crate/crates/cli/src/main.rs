use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Train and evaluate tree neural networks on arithmetic and propositional terms.
#[derive(Parser, Debug)]
#[command(name = "treenn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate arithmetic train/test datasets.
    GenArith(GenArithArgs),
    /// Generate balanced propositional entailment datasets.
    GenProp(GenPropArgs),
    /// Train a TNN and write its weights and a report.
    Train(TrainArgs),
    /// Report accuracy of trained weights on a dataset.
    Eval(EvalArgs),
    /// Print the head output for one term.
    Predict(PredictArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Arith,
    Prop,
}

#[derive(Args, Debug)]
pub struct GenArithArgs {
    #[arg(long, default_value_t = 11990)]
    pub train_count: usize,
    #[arg(long, default_value_t = 10180)]
    pub test_count: usize,
    #[arg(long, default_value_t = 10)]
    pub max_leaf: usize,
    #[arg(long, default_value_t = 4)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenPropArgs {
    #[arg(long, default_value_t = 20000)]
    pub train_count: usize,
    #[arg(long, default_value_t = 2000)]
    pub test_count: usize,
    #[arg(long, default_value_t = 6)]
    pub max_vars: usize,
    #[arg(long, default_value_t = 3)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Task::Arith)]
    pub task: Task,
    /// Schedule file; defaults to 4 x 50 epochs, lr 0.02, batch 8 to 64.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Workers per batch for schedule lines without `ncore=`.
    #[arg(long, env = "TREENN_NCORE", default_value_t = 1)]
    pub ncore: usize,
    #[arg(long, default_value_t = 12)]
    pub dim: usize,
    /// Width of the single hidden layer of every network.
    #[arg(long, default_value_t = 12)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Training objective: cross-entropy or squared-error.
    #[arg(long, default_value = "cross-entropy")]
    pub objective: treenn::Objective,
    /// Weight file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Report file; defaults to `<out>.report.txt`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub task: Task,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub term: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::GenArith(a) => commands::gen_arith(&a),
        Command::GenProp(a) => commands::gen_prop(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Predict(a) => commands::predict(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
