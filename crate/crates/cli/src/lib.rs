//! Command-line front end: `segment`, `evaluate`, `train` and `trace-inspect`.

pub mod config;
pub mod error;

mod backends;
mod evaluate;
mod inspect;
mod output;
mod segment;
mod train;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use imos::dataset::Layout;
use imos::evaluation::FVariant;

pub use config::RunConfig;
pub use error::{exit, CliError};

#[derive(Debug, Parser)]
#[command(name = "imos", version, about = "Single-image moving object segmentation")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the reasoning loop on one image; writes mask.png, overlay.png and trace.json.
    Segment(SegmentArgs),
    /// Score a predictor over a dataset; writes report.json and report.txt.
    Evaluate(EvaluateArgs),
    /// Train the tiny segmentation stack; writes a checkpoint and loss.csv.
    Train(TrainArgs),
    /// Summarise a trace.json written by `segment`.
    TraceInspect(InspectArgs),
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// Output directory.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Model initialisation seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Default)]
pub struct ReasonerArgs {
    /// JSON array of scripted reasoner replies.
    #[arg(long, value_name = "FILE")]
    pub script_file: Option<PathBuf>,
    /// Model server URL; selects the remote reasoner.
    #[arg(long, value_name = "URL")]
    pub endpoint: Option<String>,
    /// Loop iteration cap (default 5)
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Tiny-stack checkpoint directory.
    #[arg(long, value_name = "DIR")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// Dataset root.
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    /// davis, fbms, segtrack, ytobj or flat
    #[arg(long, value_parser = clap::value_parser!(Layout))]
    pub layout: Option<Layout>,
    /// Include list: one image id per line, `#` comments.
    #[arg(long, value_name = "FILE")]
    pub include: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Input image.
    pub image: Option<PathBuf>,
    /// Annotation for the oracle segmenter.
    #[arg(long, value_name = "FILE")]
    pub ground_truth: Option<PathBuf>,
    #[command(flatten)]
    pub reasoner: ReasonerArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub predictor: Option<config::PredictorKind>,
    /// boundary (default) or region
    #[arg(long, value_parser = clap::value_parser!(FVariant))]
    pub f_variant: Option<FVariant>,
    /// Boundary match radius in pixels.
    #[arg(long)]
    pub tolerance: Option<usize>,
    /// Also write per-frame report.csv.
    #[arg(long)]
    pub csv: bool,
    #[command(flatten)]
    pub reasoner: ReasonerArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Training data source
    #[arg(long, value_enum)]
    pub source: Option<config::TrainSource>,
    /// Passes over the training set
    #[arg(long)]
    pub epochs: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// trace.json to read.
    pub trace: PathBuf,
    /// Print every reasoner prompt and reply.
    #[arg(long)]
    pub calls: bool,
}

fn cwd_path(p: PathBuf) -> Result<PathBuf, CliError> {
    std::path::absolute(&p).map_err(error::io_error(p))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: Option<PathBuf>) -> Result<(), CliError> {
    if let Some(v) = value {
        *slot = Some(cwd_path(v)?);
    }
    Ok(())
}

impl CommonArgs {
    fn apply(self, c: &mut RunConfig) -> Result<(), CliError> {
        if let Some(o) = self.output {
            c.output = cwd_path(o)?;
        }
        set(&mut c.seed, self.seed);
        Ok(())
    }
}

impl ReasonerArgs {
    fn apply(self, c: &mut RunConfig) -> Result<(), CliError> {
        if let Some(f) = self.script_file {
            c.reasoner.kind = config::ReasonerKind::Scripted;
            c.reasoner.script.clear();
            c.reasoner.script_file = Some(cwd_path(f)?);
        }
        if let Some(e) = self.endpoint {
            c.reasoner.kind = config::ReasonerKind::Remote;
            c.reasoner.endpoint = Some(e);
        }
        set(&mut c.loop_config.max_iterations, self.max_iterations);
        if self.checkpoint.is_some() {
            c.segmenter.kind = config::SegmenterKind::Tiny;
        }
        set_path(&mut c.segmenter.checkpoint, self.checkpoint)
    }
}

impl DataArgs {
    fn apply(self, c: &mut RunConfig) -> Result<(), CliError> {
        set_path(&mut c.data.root, self.dataset)?;
        set(&mut c.data.layout, self.layout);
        set_path(&mut c.data.include, self.include)
    }
}

/// Loads the configuration file, if any, and applies flag overrides.
fn resolve(config: Option<&Path>, apply: impl FnOnce(&mut RunConfig) -> Result<(), CliError>) -> Result<RunConfig, CliError> {
    let mut c = match config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let mut c = RunConfig::default();
            c.anchor(&cwd_path(PathBuf::from("."))?);
            c
        }
    };
    apply(&mut c)?;
    c.validate()?;
    Ok(c)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> Result<u8, CliError> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Segment(args) => {
            let c = resolve(config, |c| {
                set_path(&mut c.segment.image, args.image)?;
                if args.ground_truth.is_some() {
                    c.segmenter.kind = config::SegmenterKind::Oracle;
                }
                set_path(&mut c.segmenter.ground_truth, args.ground_truth)?;
                args.reasoner.apply(c)?;
                args.common.apply(c)
            })?;
            segment::run(&c)
        }
        Command::Evaluate(args) => {
            let c = resolve(config, |c| {
                args.data.apply(c)?;
                set(&mut c.evaluation.predictor, args.predictor);
                set(&mut c.evaluation.f_variant, args.f_variant);
                if args.tolerance.is_some() {
                    c.evaluation.tolerance_px = args.tolerance;
                }
                c.evaluation.csv |= args.csv;
                args.reasoner.apply(c)?;
                args.common.apply(c)
            })?;
            evaluate::run(&c)
        }
        Command::Train(args) => {
            let c = resolve(config, |c| {
                args.data.apply(c)?;
                set(&mut c.training.source, args.source);
                set(&mut c.training.epochs, args.epochs);
                args.common.apply(c)
            })?;
            train::run(&c)
        }
        Command::TraceInspect(args) => inspect::run(&args.trace, args.calls),
    }
}
