use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "cluegraph",
    version,
    about = "Two-stage temporal knowledge graph forecasting"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Training config file (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Dataset directory holding train.txt, valid.txt, test.txt and optionally stat.txt.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Where artifacts are written.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Floating point width; only 64 is supported.
    #[arg(long, global = true)]
    pub precision: Option<u32>,
    /// Worker threads for rollouts and evaluation.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Raw time units per timestep when reading dataset files.
    #[arg(long, global = true, default_value_t = 1)]
    pub time_gap: u32,
    /// Config override, repeatable: `--set beam_width=16`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a dataset and write a normalized copy plus a summary.
    Ingest,
    /// Generate a synthetic dataset with planted lagged rules.
    Synth(SynthArgs),
    /// History coverage of the training queries, plus clue statistics from eval traces.
    Stats(StatsArgs),
    /// Stage-1 pretraining with the binary reward.
    Pretrain(TrainArgs),
    /// Stage-2 training with Stage 1 frozen.
    TrainStage2(TrainArgs),
    /// Joint training of both stages.
    TrainJoint(TrainArgs),
    /// Rankings and metrics for one split.
    Eval(EvalArgs),
    /// Explain the answer to a single query.
    Explain(ExplainArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub entities: Option<usize>,
    #[arg(long)]
    pub relations: Option<u32>,
    #[arg(long)]
    pub timesteps: Option<u32>,
    /// Cause events per timestep.
    #[arg(long)]
    pub base_facts: Option<usize>,
    /// Rule-free random facts per timestep.
    #[arg(long)]
    pub noise_facts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Count subject-side (inverse) training queries as well.
    #[arg(long)]
    pub both_directions: bool,
    /// Require the two hops of a 2-hop path to be at most this many steps apart.
    #[arg(long)]
    pub two_hop_delta: Option<u32>,
    /// Directory with rollouts.jsonl / sequences.jsonl written by `eval --traces`.
    #[arg(long)]
    pub traces: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Input checkpoint: the previous phase, or an interrupted run of this one.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Skip the phase-order check and allow re-running a finished phase.
    #[arg(long)]
    pub force: bool,
    /// Stop after this many epochs, leaving a resumable checkpoint.
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Valid,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Full,
    Stage1Only,
    Stage2Only,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value = "all")]
    pub mode: ModeArg,
    /// Evaluate a seeded subset of this many queries.
    #[arg(long)]
    pub max_queries: Option<usize>,
    /// Entities kept per ranking record.
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    /// Also write Stage-1 rollouts and clue-graph sequences of the full mode.
    #[arg(long)]
    pub traces: bool,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub subject: u32,
    /// Relation id; ids from R to 2R-1 ask for the subject of the base relation.
    #[arg(long)]
    pub relation: u32,
    #[arg(long)]
    pub time: u32,
    /// Known answer, to report its rank.
    #[arg(long)]
    pub answer: Option<u32>,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
}
