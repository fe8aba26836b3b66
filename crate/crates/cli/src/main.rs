//! `genexp`: generate data, train a base GNN, train and run explainers,
//! evaluate them and draw report charts.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 integrity error,
//! 4 numerical failure.

mod artifacts;
mod commands;
mod config;
mod error;
mod fsutil;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use genexp::explainers::Family;
use genexp::{LayerKind, Split};

use crate::config::{RunConfig, SplitKind};
use crate::error::CliResult;
use crate::fsutil::Root;

#[derive(Debug, Parser)]
#[command(name = "genexp", version, about = "Generative explanations for graph neural networks")]
struct Cli {
    /// Relative paths, inputs and outputs alike, resolve against this directory.
    #[arg(long, global = true, env = "GENEXP_OUTPUT_ROOT", value_name = "DIR")]
    root: Option<PathBuf>,
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic motif dataset with splits.
    GenData(GenDataArgs),
    /// Train the base classifier.
    TrainGnn(TrainGnnArgs),
    /// Train an explainer against a trained classifier.
    TrainExplainer(TrainExplainerArgs),
    /// Explain graphs, one JSON file per graph.
    Explain(ExplainArgs),
    /// Score a directory of explanations.
    Evaluate(EvaluateArgs),
    /// Charts and a summary table from evaluation reports.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// ba2motifs or ba-multishapes.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub split: Option<SplitKind>,
    /// Output file; defaults to `<generator>-<seed>.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainGnnArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Checkpoint path; defaults to `model.ckpt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// gin or gcn.
    #[arg(long)]
    pub layer: Option<LayerKind>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainExplainerArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    /// maskgen, vgae, rl_mdp, flow_dag, counterfactual, model_level, saliency or random.
    #[arg(long)]
    pub family: Option<Family>,
    /// Checkpoint path; defaults to `<family>.ckpt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Prior of the variational constraint.
    #[arg(long)]
    pub prior: Option<f64>,
    /// Weight of the variational constraint.
    #[arg(long)]
    pub weight: Option<f64>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub target_class: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub explainer: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory for the explanation files.
    #[arg(long)]
    pub out: PathBuf,
    /// Edges kept in each hard mask.
    #[arg(long)]
    pub k: Option<usize>,
    /// Split to explain; defaults to test.
    #[arg(long, conflicts_with = "all")]
    pub split: Option<Split>,
    /// Explain every graph regardless of split.
    #[arg(long)]
    pub all: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory written by `explain`.
    #[arg(long)]
    pub explanations: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output prefix for `.csv` and `.json`; defaults to `<explanations>/report`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Explanations with this many hard edges or more are left out of the aggregates.
    #[arg(long)]
    pub max_edges: Option<usize>,
    /// Threads for metric computation.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also measure the seen/unseen faithfulness gap; needs `--explainer`
    /// and a dataset with an unseen split.
    #[arg(long, requires = "explainer")]
    pub generalization: bool,
    #[arg(long)]
    pub explainer: Option<PathBuf>,
    /// Compare every hard mask with the brute-force optimum on graphs small enough.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSONs written by `evaluate`.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    /// Output directory; defaults to `report`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> CliResult<()> {
    let root = Root(cli.root.clone().unwrap_or_else(|| PathBuf::from(".")));
    let config = match &cli.config {
        Some(p) => RunConfig::load(&root.path(p))?,
        None => RunConfig::default(),
    };
    let ctx = commands::Ctx { root, config };
    match cli.command {
        Command::GenData(a) => commands::gen_data::run(ctx, a),
        Command::TrainGnn(a) => commands::train_gnn::run(ctx, a),
        Command::TrainExplainer(a) => commands::train_explainer::run(ctx, a),
        Command::Explain(a) => commands::explain::run(ctx, a),
        Command::Evaluate(a) => commands::evaluate::run(ctx, a),
        Command::Report(a) => commands::report::run(ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
