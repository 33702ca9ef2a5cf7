use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "factorscope", version, about = "Factor analytics and embeddings for portfolio backtests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Emit logs as JSON lines.
    #[arg(long, global = true)]
    pub log_json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic market with planted factor structure.
    Synth(Common),
    /// Estimate daily factor returns and correlation surfaces.
    Factors(Common),
    /// Train the sequence autoencoder on every portfolio.
    Train(TrainArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Write an HTML and CSV summary for a period.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Factors(_) => "factors",
            Command::Train(_) => "train",
            Command::Serve(_) => "serve",
            Command::Report(_) => "report",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Synth(c) | Command::Factors(c) => c,
            Command::Train(a) => &a.common,
            Command::Serve(a) => &a.common,
            Command::Report(a) => &a.common,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Input dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// First day of the period (YYYY-MM-DD).
    #[arg(long)]
    pub start: Option<NaiveDate>,
    /// Last day of the period (YYYY-MM-DD).
    #[arg(long)]
    pub end: Option<NaiveDate>,
    /// Run configuration, TOML or JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub perplexity: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub embed: EmbedArgs,
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    /// Pretrained model checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Directory where trained models are kept between restarts.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of portfolios listed by period return.
    #[arg(long)]
    pub top: Option<usize>,
}
