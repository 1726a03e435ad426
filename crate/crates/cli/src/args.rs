use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evstu_core::io::SCORER_URL_ENV;
use evstu_core::{CoarseStrategy, FineStrategy};

use crate::viz::DEFAULT_DIM;

const FRAMES_HELP: &str = "Directory of 8-bit grayscale or RGB frames (PGM/PPM/PNG), ordered by file name; \
use zero-padded indices such as frame_000.pgm, frame_001.pgm";

#[derive(Debug, Parser)]
#[command(
    name = "evstu",
    version,
    about = "Event-guided keyframe sampling and visual token pruning"
)]
#[command(after_help = "Exit codes: 0 ok, 2 usage, 3 input, 4 config, 5 scorer service.")]
pub struct Cli {
    /// Output format for standard output.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,

    /// More logging on stderr (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// One JSON object per line.
    Json,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate event frames from a frame directory and write an EVF1 file.
    Simulate(SimulateArgs),
    /// Print per-frame event density (and optionally per-patch totals).
    Density(DensityArgs),
    /// Run coarse and fine keyframe sampling.
    Sample(SampleArgs),
    /// Allocate token budgets for given keyframes and print their masks.
    Prune(PruneArgs),
    /// Run the full pipeline and write a manifest.
    Run {
        #[command(flatten)]
        run: RunArgs,
        /// Where to write the run manifest (JSON).
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Draw keep/drop overlays for every keyframe in a manifest.
    Viz(VizArgs),
    /// Run the pipeline and report per-stage timings on stderr.
    Stats {
        #[command(flatten)]
        run: RunArgs,
        /// Optionally also write the manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Gamma of the log-intensity transform.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Positive contrast threshold.
    #[arg(long)]
    pub cp: Option<f64>,
    /// Negative contrast threshold.
    #[arg(long)]
    pub cn: Option<f64>,
    /// Intensity floor before taking the log.
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, help = FRAMES_HELP)]
    pub frames: PathBuf,
    /// Output EVF1 file.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sim: SimArgs,
}

/// Event input: an EVF1 file, or frames to simulate from.
#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "event_input")]
pub struct EventArgs {
    /// EVF1 event file.
    #[arg(long, group = "event_input")]
    pub events: Option<PathBuf>,
    #[arg(long, group = "event_input", help = FRAMES_HELP)]
    pub frames: Option<PathBuf>,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub input: EventArgs,
    /// Also print per-patch event totals for a grid of this many tokens.
    #[arg(long)]
    pub tokens: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CoarseArg {
    Cs,
    Uni,
    Top,
}

impl From<CoarseArg> for CoarseStrategy {
    fn from(a: CoarseArg) -> Self {
        match a {
            CoarseArg::Cs => CoarseStrategy::Cs,
            CoarseArg::Uni => CoarseStrategy::Uni,
            CoarseArg::Top => CoarseStrategy::Top,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FineArg {
    Bin,
    Top,
}

impl From<FineArg> for FineStrategy {
    fn from(a: FineArg) -> Self {
        match a {
            FineArg::Bin => FineStrategy::Bin,
            FineArg::Top => FineStrategy::Top,
        }
    }
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub input: EventArgs,
    /// Coarse sampling rate in (0, 1].
    #[arg(long, default_value_t = 0.25)]
    pub rate: f64,
    /// Number of fine keyframes.
    #[arg(long, default_value_t = 32)]
    pub fine_count: usize,
    #[arg(long, value_enum, default_value_t = CoarseArg::Cs)]
    pub coarse: CoarseArg,
    #[arg(long, value_enum, default_value_t = FineArg::Bin)]
    pub fine: FineArg,
    /// Score sidecar; without it the fine stage thins the coarse set uniformly.
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    #[command(flatten)]
    pub input: EventArgs,
    /// Keyframe indices, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub keyframes: Vec<usize>,
    /// Score sidecar giving each keyframe's relevance; equal shares otherwise.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Attention sidecar; without it only the physics stage runs.
    #[arg(long)]
    pub attention: Option<PathBuf>,
    /// Run config to take the pruning section from.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overall pruning ratio.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Cap on the physics-stage pruning ratio.
    #[arg(long)]
    pub physics_cap: Option<f64>,
    /// Base retained ratio per frame.
    #[arg(long)]
    pub base_retained: Option<f64>,
    /// Visual tokens per frame.
    #[arg(long)]
    pub tokens: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, help = FRAMES_HELP)]
    pub frames: PathBuf,
    /// Real event frames (EVF1); implies event_source real-frames.
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long)]
    pub question: String,
    /// Run config (JSON). Relative paths inside it are resolved against its directory.
    #[arg(long)]
    pub config: PathBuf,
    /// Scorer service base URL; overrides scorer.endpoint.
    #[arg(long, env = SCORER_URL_ENV)]
    pub scorer_url: Option<String>,
    /// Worker threads for per-frame stages; 0 picks one per core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct VizArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, help = FRAMES_HELP)]
    pub frames: PathBuf,
    /// Output directory for keyframe_NNNNNN.png overlays.
    #[arg(long)]
    pub out: PathBuf,
    /// Brightness factor applied to dropped patches.
    #[arg(long, default_value_t = DEFAULT_DIM)]
    pub dim: f32,
    /// Skip outlining kept patches.
    #[arg(long)]
    pub no_outline: bool,
}
