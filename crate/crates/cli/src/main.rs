mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use metalake_core::agent::{Ablation, DEFAULT_BUDGET};
use metalake_core::search::DEFAULT_K;

/// Metadata reasoning over a directory of CSV tables.
#[derive(Debug, Parser)]
#[command(name = "metalake", version, about)]
pub struct Cli {
    /// Lake root directory; artifacts go to <lake>/.metalake/
    #[arg(long, global = true, default_value = ".")]
    pub lake: PathBuf,
    /// Seed for every random choice
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads for parallel stages (default: all cores)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Print machine-readable JSON instead of text
    #[arg(long, global = true)]
    pub json: bool,
    /// Log progress to stderr
    #[arg(long, short, global = true)]
    pub verbose: bool,
    /// Text generation provider: none, live (endpoint from METALAKE_LLM_ENDPOINT) or scripted:<file>
    #[arg(long, global = true, default_value = "none")]
    pub provider: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan the lake and write the table catalog
    Ingest(IngestArgs),
    /// Compute column statistics for every cataloged table
    Profile(ProfileArgs),
    /// Write content summaries and discriminative descriptions
    Describe,
    /// Embed table texts into vector indexes
    Index(IndexArgs),
    /// Run one semantic search over an index
    Search(SearchArgs),
    /// Run an on-demand metadata tool and print its JSON report
    Tool(ToolArgs),
    /// Run the table-selection agent for one task
    Select(SelectArgs),
    /// Generate a messy lake with lineage from a clean lake
    Synth(SynthArgs),
    /// Score selections for a task file
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Infer types from every row instead of the first rows only
    #[arg(long)]
    pub full_scan: bool,
    /// Rows sampled for type inference without --full-scan
    #[arg(long, default_value_t = metalake_core::catalog::DEFAULT_INFERENCE_CAP)]
    pub inference_cap: usize,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// Most frequent values kept per column
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    /// Histogram bins for numeric columns
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    SchemaOnly,
    Content,
    Discriminative,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedderArg {
    /// Deterministic hashing embedder
    Local,
    /// HTTP endpoint from METALAKE_EMBED_ENDPOINT
    Remote,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Which table text to embed
    #[arg(long, value_enum, default_value = "all")]
    pub kind: KindArg,
    #[arg(long, value_enum, default_value = "local")]
    pub embedder: EmbedderArg,
    /// Dimension of remote embeddings
    #[arg(long, default_value_t = metalake_core::providers::LOCAL_DIMS)]
    pub dims: usize,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub query: String,
    #[arg(long, value_enum, default_value = "discriminative")]
    pub kind: KindArg,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    /// Cosine distance cutoff (default 0.9 with the local embedder, 0.7 with remote)
    #[arg(long)]
    pub max_distance: Option<f64>,
    /// Show full content summaries for new tables
    #[arg(long)]
    pub attached: bool,
    /// Session file carrying seen tables across calls; created if missing
    #[arg(long)]
    pub session: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "local")]
    pub embedder: EmbedderArg,
    #[arg(long, default_value_t = metalake_core::providers::LOCAL_DIMS)]
    pub dims: usize,
}

#[derive(Debug, Args)]
pub struct ToolArgs {
    #[command(subcommand)]
    pub tool: ToolCommand,
}

#[derive(Debug, Subcommand)]
pub enum ToolCommand {
    /// Exact statistics of one column
    Profile {
        #[arg(long)]
        table: String,
        #[arg(long)]
        column: String,
    },
    /// Whether a value occurs in a table
    Find {
        #[arg(long)]
        table: String,
        #[arg(long)]
        value: String,
        #[arg(long)]
        column: Option<String>,
    },
    /// Overlap statistics between two columns given as table.column
    Join {
        #[arg(long)]
        left: String,
        #[arg(long)]
        right: String,
    },
}

#[derive(Debug, Args, Clone)]
pub struct AgentArgs {
    /// Metadata variant: search, attached, tools or full
    #[arg(long, default_value = "full", value_parser = parse_ablation)]
    pub ablation: Ablation,
    /// Step budget per session
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: usize,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    /// Cosine distance cutoff (default 0.9 with the local embedder, 0.7 with remote)
    #[arg(long)]
    pub max_distance: Option<f64>,
    /// Drop final tables that the justification never names
    #[arg(long)]
    pub post_filter: bool,
    /// Index searched by the agent
    #[arg(long, value_enum, default_value = "discriminative")]
    pub kind: KindArg,
    #[arg(long, value_enum, default_value = "local")]
    pub embedder: EmbedderArg,
    #[arg(long, default_value_t = metalake_core::providers::LOCAL_DIMS)]
    pub dims: usize,
}

impl EmbedderArg {
    pub fn max_distance(self, explicit: Option<f64>) -> f64 {
        explicit.unwrap_or(match self {
            EmbedderArg::Local => metalake_core::search::LOCAL_MAX_DISTANCE,
            EmbedderArg::Remote => metalake_core::search::DEFAULT_MAX_DISTANCE,
        })
    }
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub task: String,
    /// scripted:<file> (one reply per line) or llm
    #[arg(long)]
    pub policy: String,
    /// Where to write the full result with transcript
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub agent: AgentArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory of clean CSV tables
    #[arg(long)]
    pub clean: PathBuf,
    /// Empty or missing output directory
    #[arg(long)]
    pub out: PathBuf,
    /// JSON generator settings; its seed is replaced by --seed
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Reference,
    Lineage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DenominatorArg {
    PerPartition,
    PerBase,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSONL task file
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// scripted:<file> (JSON object of task_id to replies), llm, or baseline (top-k search hits)
    #[arg(long, default_value = "baseline")]
    pub policy: String,
    /// Output directory (default <lake>/.metalake/eval)
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Recall units for partitioned tables in lineage mode
    #[arg(long, value_enum, default_value = "per-partition")]
    pub denominator: DenominatorArg,
    #[command(flatten)]
    pub agent: AgentArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Debug
        } else {
            log::LevelFilter::Warn
        })
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
        {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match commands::run(&cli) {
        Ok(out) => {
            if cli.json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&out.json).unwrap_or_default()
                );
            } else if !out.human.is_empty() {
                println!("{}", out.human.trim_end());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
