use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use drugnet::{Aggregate, ClassFilter, GraphKind, Resolution};

#[derive(Debug, Parser)]
#[command(
    name = "drugnet",
    version,
    about = "Build and query term co-occurrence networks from user timelines"
)]
pub struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true, default_value = "drugnet.toml")]
    pub config: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load the corpus into the store.
    Ingest,
    /// Tag every post with dictionary terms.
    Tag,
    /// Count co-occurrences and build proximity graphs for each resolution.
    Build,
    /// Compute the metric closure of each distance graph.
    Closure,
    /// Rank term pairs by direct proximity.
    RankDirect(RankArgs),
    /// Rank term pairs by how much the closure shortens their distance.
    RankSemimetric(SemimetricArgs),
    /// Principal components of the proximity matrix.
    Pca(PcaArgs),
    /// Terms related to a query set.
    Query(QueryArgs),
    /// Write a network or subnetwork as TSV or GraphML.
    Export(ExportArgs),
    /// Serve a built store over HTTP.
    Serve(ServeArgs),
    /// Write a synthetic corpus with planted associations, plus dictionaries
    /// and a config to run it.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Number of pairs to keep.
    #[arg(short, long)]
    pub k: Option<usize>,
    /// Class filter such as `drug+natural_product:symptom`, or `any`.
    #[arg(long)]
    pub filter: Option<ClassFilter>,
    /// Resolution to rank (default: week when configured, else the first).
    #[arg(long)]
    pub resolution: Option<Resolution>,
    /// Print JSON instead of TSV.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SemimetricArgs {
    #[command(flatten)]
    pub rank: RankArgs,
    /// Score pairs without a direct edge as if their direct distance were
    /// this value, instead of ranking them in their own tier.
    #[arg(long)]
    pub absent_distance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PcaArgs {
    #[arg(long)]
    pub resolution: Option<Resolution>,
    /// List the terms correlated with this component (1-based).
    #[arg(long)]
    pub component: Option<usize>,
    /// Correlation threshold for `--component`.
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphChoice {
    Direct,
    Closed,
}

impl From<GraphChoice> for GraphKind {
    fn from(g: GraphChoice) -> Self {
        match g {
            GraphChoice::Direct => GraphKind::Direct,
            GraphChoice::Closed => GraphKind::Closed,
        }
    }
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Comma-separated query terms.
    #[arg(long, value_delimiter = ',', required = true)]
    pub terms: Vec<String>,
    #[arg(long, default_value = "min")]
    pub phi: Aggregate,
    /// Minimum score (default: the config's alpha).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum, default_value = "direct")]
    pub graph: GraphChoice,
    #[arg(long)]
    pub resolution: Option<Resolution>,
    /// Read this store directory instead of the config's output.
    #[arg(long)]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Tsv,
    Graphml,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub resolution: Option<Resolution>,
    #[arg(long, value_enum, default_value = "direct")]
    pub graph: GraphChoice,
    #[arg(long, value_enum, default_value = "tsv")]
    pub format: ExportFormat,
    /// Drop edges with proximity below this value.
    #[arg(long, default_value_t = 0.0)]
    pub min_weight: f64,
    /// Restrict to the subgraph induced by these terms.
    #[arg(long, value_delimiter = ',', conflicts_with = "component")]
    pub terms: Option<Vec<String>>,
    /// Restrict to the terms correlated with this PCA component (1-based).
    #[arg(long)]
    pub component: Option<usize>,
    /// Correlation threshold for `--component`.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Store directory (default: the config's output).
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory to write into; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub users: usize,
    #[arg(long, default_value_t = 20_000)]
    pub posts: usize,
    #[arg(long, default_value_t = 100)]
    pub vocab: usize,
    #[arg(long, default_value_t = 3)]
    pub pairs: usize,
    #[arg(long, default_value_t = 2)]
    pub chains: usize,
    #[arg(long, default_value_t = 0.8)]
    pub co_rate: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}
