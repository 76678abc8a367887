//! Command-line front end: one subcommand per pipeline stage.

use crate::error::Result;
use crate::stages::{
    stage_eval, stage_flow, stage_score, stage_synth, stage_track, stage_train, stage_windows,
    PipelineConfig, StagePaths,
};
use crate::train::Variant;
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "thermofall",
    about = "Thermal-video fall detection: tracking, optical flow, adversarial autoencoders, anomaly scoring",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Common {
    /// Pipeline configuration (JSON, one section per stage).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the dataset and training seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for datasets, checkpoints, scores and tables.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Cache directory for intermediate stage artifacts (default: <out>/cache).
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VariantArg {
    /// Model variant (default: the config's train.variant).
    #[arg(long)]
    variant: Option<Variant>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate the synthetic thermal dataset with oracle detections.
    Synth(Common),
    /// Track the person in every video and write per-frame boxes.
    Track(Common),
    /// Compute dense optical flow for consecutive tracked frames.
    Flow(Common),
    /// Build preprocessed sub-video windows from frames, boxes and flow.
    Windows(Common),
    /// Train a model variant on the ADL sub-videos.
    Train(TrainCmd),
    /// Score the test sub-videos with a trained checkpoint.
    Score(TrainCmd),
    /// Evaluate scores: AUC tables, tolerance sweep, optional SVG curves.
    Eval(Common),
}

#[derive(Args, Debug)]
struct TrainCmd {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    variant: VariantArg,
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.synth.seed = seed;
        cfg.train.config.seed = seed;
    }
    Ok(cfg)
}

fn run(cmd: &Cmd) -> Result<()> {
    let common = match cmd {
        Cmd::Synth(c) | Cmd::Track(c) | Cmd::Flow(c) | Cmd::Windows(c) | Cmd::Eval(c) => c,
        Cmd::Train(t) | Cmd::Score(t) => &t.common,
    };
    let cfg = load_config(common)?;
    let paths = StagePaths::new(common.out.clone(), common.cache.clone());
    match cmd {
        Cmd::Synth(_) => stage_synth(&cfg, &paths),
        Cmd::Track(_) => stage_track(&cfg, &paths),
        Cmd::Flow(_) => stage_flow(&cfg, &paths),
        Cmd::Windows(_) => stage_windows(&cfg, &paths),
        Cmd::Train(t) => {
            let variant = t.variant.variant.unwrap_or(cfg.train.variant);
            stage_train(&cfg, &paths, variant).map(|_| ())
        }
        Cmd::Score(t) => {
            let variant = t.variant.variant.unwrap_or(cfg.train.variant);
            stage_score(&cfg, &paths, variant)
        }
        Cmd::Eval(_) => stage_eval(&cfg, &paths),
    }
}

/// Parses and runs one invocation; returns the process exit status.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli.cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
