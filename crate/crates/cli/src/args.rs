use std::path::PathBuf;

use clap::{ArgAction, ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "kgceval",
    version,
    about = "Rank-based evaluation for knowledge graph completion",
    long_about = "Computes sharpness- and popularity-parameterised scores from the ranks a \
                  KGC model assigns to gold entities, sweeps the (alpha, beta) plane and \
                  reports ranking flips between models."
)]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// More log output on stderr (repeat for debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    /// Only log errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dataset statistics: entities, relations, training triples, gold popularity.
    Stats(StatsArgs),
    /// Turn a JSON-lines score file into a rank file.
    Rank(RankArgs),
    /// Score one model's ranks under one (alpha, beta) setting.
    Eval(EvalArgs),
    /// Score several models over an (alpha, beta) grid and report ranking flips.
    Sweep(SweepArgs),
    /// Side-by-side metric table for two models at one (alpha, beta) setting.
    Compare(CompareArgs),
    /// Write a synthetic rank file from a JSON profile.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Counting {
    /// Head and tail slot occurrences (a self-loop counts twice).
    Slots,
    /// Training triples that mention the entity (a self-loop counts once).
    Triples,
}

/// Where the triple splits come from: a directory with `train.txt`,
/// `valid.txt` and `test.txt`, individual files, or both (files win).
#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// Directory holding train.txt, valid.txt and test.txt.
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,

    /// Training split (overrides DIR/train.txt).
    #[arg(long, value_name = "FILE")]
    pub train: Option<PathBuf>,

    /// Validation split (overrides DIR/valid.txt).
    #[arg(long, value_name = "FILE")]
    pub valid: Option<PathBuf>,

    /// Test split (overrides DIR/test.txt).
    #[arg(long, value_name = "FILE")]
    pub test: Option<PathBuf>,

    /// How entity popularity is counted from the training split.
    #[arg(long, value_enum, default_value_t = Counting::Slots)]
    pub counting: Counting,
}

/// Gold popularity and |E| for commands that read rank files.
#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    #[command(flatten)]
    pub data: DatasetArgs,

    /// Number of entities |E| when no dataset is given (needed by the affine transformer).
    #[arg(long, value_name = "N")]
    pub entities: Option<u64>,

    /// `label<TAB>popularity` table used instead of a dataset, e.g. from `synth --popularity-out`.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["dataset", "train", "valid", "test"])]
    pub popularity: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TieArgs {
    /// Tie policy for equal scores: optimistic, pessimistic, average or random [default: average].
    #[arg(long, value_name = "POLICY")]
    pub tie: Option<String>,

    /// Seed for the random tie policy.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,

    /// Rank against every entity instead of filtering other known answers.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: DatasetArgs,

    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,

    /// Write the entity vocabulary (`label<TAB>id`, the score-row order) to FILE.
    #[arg(long, value_name = "FILE")]
    pub vocab_out: Option<PathBuf>,

    /// Write `label<TAB>popularity` for every entity to FILE.
    #[arg(long, value_name = "FILE")]
    pub popularity_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RankArgs {
    /// JSON-lines score file, one row per test query.
    #[arg(long, value_name = "FILE")]
    pub scores: PathBuf,

    #[command(flatten)]
    pub data: DatasetArgs,

    #[command(flatten)]
    pub tie: TieArgs,

    /// Rank file to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct MetricArgs {
    /// Sharpness (> 0); larger values punish non-top ranks harder.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub alpha: f64,

    /// Popularity robustness (>= 0); larger values down-weight popular gold entities.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub beta: f64,

    #[command(flatten)]
    pub shared: SharedMetricArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SharedMetricArgs {
    /// Added to the popularity inside the weight (> 0).
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub epsilon: f64,

    /// Use the raw transformer r^-alpha instead of the affine [0, 1] rescaling.
    #[arg(long)]
    pub no_affine: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Hits@k cut-offs.
    #[arg(long, value_delimiter = ',', default_value = "1,3,10")]
    pub hits: Vec<u64>,

    /// Popularity strata: `auto` (powers of two up to the largest popularity) or edges `0,e1,e2,...`.
    #[arg(long, default_value = "auto")]
    pub strata: String,
}

#[derive(Debug, Clone, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["ranks", "scores"])))]
pub struct EvalArgs {
    /// Rank file (`head<TAB>relation<TAB>tail<TAB>direction<TAB>rank`).
    #[arg(long, value_name = "FILE")]
    pub ranks: Option<PathBuf>,

    /// JSON-lines score file, ranked on the fly (needs a dataset).
    #[arg(long, value_name = "FILE")]
    pub scores: Option<PathBuf>,

    #[command(flatten)]
    pub source: SourceArgs,

    #[command(flatten)]
    pub metric: MetricArgs,

    #[command(flatten)]
    pub tie: TieArgs,

    #[command(flatten)]
    pub report: ReportArgs,

    /// Output file (default: stdout). A `.csv` extension selects CSV.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    /// Output format [default: json, or csv for a .csv output file].
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Models as `name=rankfile`.
    #[arg(long, value_name = "NAME=FILE", num_args = 1.., required = true)]
    pub ranks: Vec<String>,

    #[command(flatten)]
    pub source: SourceArgs,

    /// Sharpness values, ascending.
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2")]
    pub alphas: Vec<f64>,

    /// Popularity robustness values, ascending.
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.8")]
    pub betas: Vec<f64>,

    /// Reference cell `alpha,beta` that flips are measured against.
    #[arg(long, default_value = "1,0", value_name = "ALPHA,BETA")]
    pub base: String,

    #[command(flatten)]
    pub shared: SharedMetricArgs,

    /// Rank histogram bin edges, starting at 1 (an overflow bin is added).
    #[arg(long, value_delimiter = ',', default_value = "1,2,6,11,101")]
    pub bins: Vec<u64>,

    /// Output directory for surface.csv, rankings.json, flips.json, histogram.csv.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Exactly two models as `name=rankfile`.
    #[arg(long, value_name = "NAME=FILE", num_args = 2, required = true)]
    pub ranks: Vec<String>,

    #[command(flatten)]
    pub source: SourceArgs,

    #[command(flatten)]
    pub metric: MetricArgs,

    #[command(flatten)]
    pub report: ReportArgs,

    /// Output file (default: stdout).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// JSON rank profile (`{"kind": "mixture", ...}` or `{"kind": "explicit", ...}`).
    #[arg(long, value_name = "FILE")]
    pub profile: PathBuf,

    /// Number of records.
    #[arg(long)]
    pub n: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Rank file to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Also write the gold popularity table, for `--popularity` in eval, sweep and compare.
    #[arg(long, value_name = "FILE")]
    pub popularity_out: Option<PathBuf>,
}
