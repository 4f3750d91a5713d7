//! `mcaf`: dehazing, haze analysis, dataset stratification, quality metrics
//! and model accounting from the command line.
//!
//! Machine-readable JSON goes to stdout. Failures print one JSON line
//! `{"error": ..., "kind": ...}` to stderr and exit 1; usage errors exit 2.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use mcaf_core::rng::DEFAULT_SEED;

#[derive(Parser, Debug)]
#[command(
    name = "mcaf",
    version,
    about = "Remote-sensing image dehazing toolkit"
)]
pub struct Cli {
    /// Human-readable tables instead of JSON.
    #[arg(long, global = true)]
    pub pretty: bool,

    /// Worker threads for `analyze` and `metrics`; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    /// Seed for every random draw.
    #[arg(long, global = true, env = "MCAF_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Source channel for each of R, G and B when loading images.
    #[arg(long, global = true, default_value = "0,1,2")]
    pub bands: Bands,

    #[command(subcommand)]
    pub command: Command,
}

/// Three comma-separated channel indices, e.g. `2,1,0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bands(pub [usize; 3]);

impl FromStr for Bands {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v = s
            .split(',')
            .map(|b| b.trim().parse::<usize>().map_err(|e| format!("{b:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        v.try_into()
            .map(Bands)
            .map_err(|v: Vec<usize>| format!("expected 3 indices, got {}", v.len()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Dcp,
    Mcafnet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Full-size network.
    Default,
    /// Small network for CPU experiments.
    Toy,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Built-in architecture.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,

    /// `key=value` architecture file; overrides --preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct HazeArgs {
    /// Dark-channel patch radius.
    #[arg(long, default_value_t = 7)]
    pub radius: usize,

    /// Thin/moderate and moderate/thick boundaries, 0-255 scale.
    #[arg(long, num_args = 2, value_names = ["T1", "T2"])]
    pub thresholds: Option<Vec<f64>>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Remove haze from one image.
    Dehaze {
        #[arg(long, value_enum)]
        method: Method,
        /// MCAF-Net weight file; freshly initialised weights when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        /// DCP transmission strength.
        #[arg(long, default_value_t = 0.95)]
        omega: f64,
        /// DCP transmission floor.
        #[arg(long, default_value_t = 0.1)]
        t0: f64,
        #[arg(long, default_value_t = 7)]
        radius: usize,
        input: PathBuf,
        output: PathBuf,
    },
    /// Grade haze density of images.
    Analyze {
        #[command(flatten)]
        haze: HazeArgs,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Grade hazy/clear pairs and split them into a JSONL manifest.
    Stratify {
        #[arg(long)]
        hazy: PathBuf,
        #[arg(long)]
        clear: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Cut every pair into square tiles of this side.
        #[arg(long)]
        tile: Option<usize>,
        #[command(flatten)]
        haze: HazeArgs,
    },
    /// Quality of a test image against a reference (files or directories).
    Metrics {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Model written by `niqe-fit`; adds a NIQE score of the test image.
        #[arg(long)]
        niqe_model: Option<PathBuf>,
    },
    /// Parameter and FLOP counts of an architecture.
    ModelInfo {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 256)]
        height: usize,
        #[arg(long, default_value_t = 256)]
        width: usize,
    },
    /// Compare analytic and numeric gradients on random graphs.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
        #[arg(long, default_value_t = 20)]
        graphs: u64,
    },
    /// Overfit a network to one hazy/clear pair.
    TrainToy {
        #[arg(long)]
        hazy: PathBuf,
        #[arg(long)]
        clear: PathBuf,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        /// Also write the per-step loss trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Fit a NIQE pristine model to clean images.
    NiqeFit {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 96)]
        patch: usize,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            if !e.render().to_string().contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(2);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.to_string(), "kind": e.kind() });
            eprintln!("{line}");
            ExitCode::from(1)
        }
    }
}
