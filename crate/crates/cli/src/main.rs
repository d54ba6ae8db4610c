mod commands;
mod error;
mod patches;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use slideqa_core::fixtures::DEFAULT_SEED;

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "slideqa", version, about = "Tile classification and quality assessment for stained slides")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    /// CNN with depthwise-separable blocks
    Dwnet,
    /// HOG features with a linear classifier
    Hog,
    /// Color LBP features with a linear classifier
    ColorLbp,
}

impl Engine {
    pub fn id(self) -> &'static str {
        match self {
            Engine::Dwnet => "dwnet",
            Engine::Hog => "hog",
            Engine::ColorLbp => "color-lbp",
        }
    }
}

#[derive(Args, Clone, Copy)]
pub struct Threads {
    /// Worker threads [default: available parallelism]
    #[arg(long, env = "SLIDE_ASSESS_THREADS")]
    threads: Option<usize>,
}

impl Threads {
    pub fn resolve(self) -> Result<usize, CliError> {
        match self.threads {
            Some(0) => Err(CliError::usage("--threads must be at least 1")),
            Some(n) => Ok(n),
            None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Classify a directory of patches; prints path,l1,p1,l2,p2
    Classify {
        /// Flat directory of patches, or one subdirectory per label
        dir: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Fail unless the model was built for this engine
        #[arg(long, value_enum)]
        engine: Option<Engine>,
        #[command(flatten)]
        threads: Threads,
    },
    /// Assess a slide: report JSON, verdicts and an information-density heat map
    Assess {
        slide: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Tile side in pixels [default: model input size]
        #[arg(long)]
        tile: Option<u32>,
        /// Tile stride in pixels [default: tile side]
        #[arg(long)]
        stride: Option<u32>,
        /// JSON file with verdict cut points
        #[arg(long)]
        thresholds: Option<PathBuf>,
        /// Report path; the report goes to stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
        /// Heat-map image path (.png or .ppm)
        #[arg(long)]
        heatmap: Option<PathBuf>,
        /// Heat-map opacity over the slide; 1 paints the bare color field
        #[arg(long, default_value_t = slideqa_core::density::DEFAULT_OPACITY)]
        opacity: f64,
        /// Write zero timings so output is reproducible byte for byte
        #[arg(long)]
        no_timings: bool,
        #[command(flatten)]
        threads: Threads,
    },
    /// Compare system verdicts with expert verdicts
    Agree {
        /// Expert verdicts, one `id,staining,density,damage` line per slide
        #[arg(long)]
        experts: PathBuf,
        /// System verdict CSV files or assessment report JSON files
        #[arg(required = true)]
        system: Vec<PathBuf>,
    },
    /// Multiply-accumulate cost table of an architecture or a single layer
    Flops {
        /// Reference descriptor name or descriptor JSON path
        #[arg(long, default_value = "slidenet-128")]
        arch: String,
        /// Single layer as `DK,M,N,DF` instead of a whole network
        #[arg(long)]
        layer: Option<String>,
        /// Emit JSON instead of a text table
        #[arg(long)]
        json: bool,
    },
    /// Train a classifier head on a labeled patch directory
    Train {
        /// One subdirectory per label
        dir: PathBuf,
        #[arg(long, value_enum, default_value = "dwnet")]
        engine: Engine,
        /// Backbone for the dwnet engine: reference name or descriptor JSON path
        #[arg(long, default_value = "slidenet-128")]
        arch: String,
        /// Patch side for the linear engines [default: first patch's side]
        #[arg(long)]
        tile: Option<u32>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        threads: Threads,
    },
    /// Patches-per-second benchmark, one JSON line per engine
    Bench {
        /// Engines to time; dwnet runs once per --arch or --model
        #[arg(long, value_enum, default_values = ["dwnet"])]
        engine: Vec<Engine>,
        /// Trained containers to time instead of freshly initialized ones
        #[arg(long)]
        model: Vec<PathBuf>,
        /// Reference names or descriptor paths for dwnet without --model
        #[arg(long, default_values = ["slidenet-128", "slidenet-224"])]
        arch: Vec<String>,
        /// Patch side for the linear engines
        #[arg(long, default_value_t = 128)]
        tile: u32,
        /// Patch directory; decoding is then included in the timing
        #[arg(long)]
        patches: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        threads: Threads,
    },
    /// Write synthetic labeled patches and optionally a synthetic slide
    GenFixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        /// Patch side in pixels
        #[arg(long, default_value_t = 128)]
        tile: u32,
        /// Also write `slide.png` with this side length
        #[arg(long)]
        slide: Option<u32>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Classify { dir, model, engine, threads } => {
            commands::classify(&dir, &model, engine, threads.resolve()?)
        }
        Command::Assess {
            slide,
            model,
            tile,
            stride,
            thresholds,
            out,
            heatmap,
            opacity,
            no_timings,
            threads,
        } => commands::assess(&commands::AssessArgs {
            slide,
            model,
            tile,
            stride,
            thresholds,
            out,
            heatmap,
            opacity,
            timings: !no_timings,
            threads: threads.resolve()?,
        }),
        Command::Agree { experts, system } => commands::agree(&experts, &system),
        Command::Flops { arch, layer, json } => commands::flops(&arch, layer.as_deref(), json),
        Command::Train { dir, engine, arch, tile, out, epochs, seed, threads } => commands::train(&commands::TrainArgs {
            dir,
            engine,
            arch,
            tile,
            out,
            epochs,
            seed,
            threads: threads.resolve()?,
        }),
        Command::Bench {
            engine,
            model,
            arch,
            tile,
            patches,
            count,
            warmup,
            repetitions,
            seed,
            threads,
        } => commands::bench(&commands::BenchArgs {
            engines: engine,
            models: model,
            archs: arch,
            tile,
            patches,
            count,
            warmup,
            repetitions,
            seed,
            threads: threads.resolve()?,
        }),
        Command::GenFixtures { out, per_class, tile, slide, seed } => {
            commands::gen_fixtures(&out, per_class, tile, slide, seed)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
