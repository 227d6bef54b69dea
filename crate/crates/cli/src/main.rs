use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Default seed for `split`; printed on every run so a split can be redone.
pub const DEFAULT_SEED: u64 = 13;

#[derive(Parser)]
#[command(name = "aqua", version, about = "Additive deliberative-quality scores for comments")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit correlation weights from paired expert and crowd annotations.
    FitWeights(FitWeightsArgs),
    /// Score comments with a weight table and a prediction source.
    Score(ScoreArgs),
    /// Evaluate scores or predictions against gold labels.
    Evaluate(EvaluateArgs),
    /// List the highest and lowest scored comments.
    Rank(RankArgs),
    /// Relate scores to comment length in words.
    ReportLength(ReportLengthArgs),
    /// Shuffle a comment file into train/val/test parts.
    Split(SplitArgs),
    /// Per-criterion Krippendorff's alpha over multi-coder annotations.
    Agreement(AgreementArgs),
}

#[derive(Clone, Copy, Default, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
}

#[derive(Args)]
pub struct FitWeightsArgs {
    /// Expert annotations (.jsonl or .csv).
    #[arg(long)]
    pub expert: PathBuf,
    /// Crowd votes or labels (.jsonl or .csv).
    #[arg(long)]
    pub crowd: PathBuf,
    /// Comment texts; only used to report paired ids without text.
    #[arg(long)]
    pub comments: Option<PathBuf>,
    /// Output weights.tsv.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
pub struct WeightSource {
    /// Weight table (weights.tsv).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Use the built-in published weight table.
    #[arg(long)]
    pub default_weights: bool,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub weights: WeightSource,
    /// Precomputed predictions.jsonl.
    #[arg(long, group = "provider")]
    pub predictions: Option<PathBuf>,
    /// Deterministic mock predictor: all zeros plus any --mock-rule.
    #[arg(long, group = "provider")]
    pub mock: bool,
    /// Mock rule PATTERN=>criterion:level (case-insensitive substring).
    #[arg(long = "mock-rule", requires = "mock")]
    pub mock_rules: Vec<String>,
    /// Inference service base URL. Ignored when --predictions or --mock is
    /// given.
    #[arg(long, env = "AQUA_ENDPOINT")]
    pub endpoint: Option<String>,
    /// Per-request timeout for --endpoint.
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
    /// Comments per request for --endpoint.
    #[arg(long, default_value_t = 32)]
    pub max_batch: usize,
    /// Concurrent requests for --endpoint.
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    /// Retries per failed batch for --endpoint.
    #[arg(long, default_value_t = 2)]
    pub retries: u32,
    /// Comments to score (.jsonl or .csv). Required unless --predictions.
    #[arg(long)]
    pub comments: Option<PathBuf>,
    /// Output scores.jsonl; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// scores.jsonl, required for binary labels.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// labels.jsonl with "label" (binary) or "toxicity" (0-3) records.
    #[arg(long)]
    pub labels: PathBuf,
    /// Fixed decision threshold on the 0-5 scale.
    #[arg(long, default_value_t = aqua_core::eval::DEFAULT_THRESHOLD, conflicts_with = "tune")]
    pub threshold: f64,
    /// Pick the threshold with the best weighted F1 on a grid.
    #[arg(long)]
    pub tune: bool,
    /// Tuning grid LO:HI:STEP.
    #[arg(long, default_value = "0:5:0.05", requires = "tune")]
    pub grid: String,
    /// predictions.jsonl, required for toxicity labels.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Criteria compared against toxicity labels.
    #[arg(long, value_delimiter = ',', default_values_t = aqua_core::Criterion::TOXICITY.map(|c| c.to_string()))]
    pub criteria: Vec<String>,
    #[arg(long, value_enum, default_value_t)]
    pub format: OutputFormat,
    /// Also write the JSON report here.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct RankArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub top: usize,
    #[arg(long, default_value_t = 3)]
    pub bottom: usize,
    #[arg(long, value_enum, default_value_t)]
    pub format: OutputFormat,
}

#[derive(Args)]
pub struct ReportLengthArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub comments: PathBuf,
    /// CSV `word_count,aqua`; stdout when omitted, in which case the bin
    /// summary is skipped.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: OutputFormat,
}

#[derive(Args)]
pub struct SplitArgs {
    /// Comments to split (.jsonl or .csv).
    #[arg(long)]
    pub comments: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Receives train/val/test files in the input format.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0.65)]
    pub train: f64,
    #[arg(long, default_value_t = 0.15)]
    pub val: f64,
    #[arg(long, default_value_t = 0.20)]
    pub test: f64,
}

#[derive(Args)]
pub struct AgreementArgs {
    /// JSONL lines {"comment_id","coder","scores":{criterion:int|null}}.
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, default_value_t = aqua_core::eval::ALPHA_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t)]
    pub format: OutputFormat,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("AQUA_LOG")
        .init();

    let result = match cli.command {
        Command::FitWeights(a) => commands::fit_weights(&a),
        Command::Score(a) => commands::score(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Rank(a) => commands::rank(&a),
        Command::ReportLength(a) => commands::report_length(&a),
        Command::Split(a) => commands::split(&a),
        Command::Agreement(a) => commands::agreement(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<commands::UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {}", render_chain(&e));
            ExitCode::from(1)
        }
    }
}

/// Joins the error chain with `: `, skipping causes that a wrapper already
/// spelled out in its own message.
fn render_chain(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !msg.ends_with(&c) {
            msg.push_str(": ");
            msg.push_str(&c);
        }
    }
    msg
}
