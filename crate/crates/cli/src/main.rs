//! `wxbs`: batch front end for two-view matching, evaluation and demos.
//!
//! Exit codes: 0 success, 1 matching failed, 2 usage or I/O error.

mod demos;
mod evaluate;
mod matching;
mod output;
mod viz;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wxbs_core::{DescriptorKind, DetectorKind, MatcherConfig, WantModel};

#[derive(Parser, Debug)]
#[command(name = "wxbs", version, about = "Wide-baseline two-view matcher")]
struct Cli {
    /// Worker threads; 0 uses all available cores.
    #[arg(long, global = true, env = "WXBS_THREADS", default_value_t = 0)]
    threads: usize,

    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Match two images and write the report, correspondences and an optional visualization.
    Match(MatchArgs),
    /// Run the matcher over a ground-truth manifest and write recall curves.
    EvalMatcher(EvalMatcherArgs),
    /// Descriptor precision-recall over the homography pairs of a manifest.
    EvalDesc(EvalDescArgs),
    /// Write the synthesized views of one schedule iteration.
    SynthDemo(SynthDemoArgs),
    /// Detect keypoints with orientations and write them as CSV.
    DetectDemo(DetectDemoArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    #[value(name = "F", alias = "f")]
    F,
    #[value(name = "H", alias = "h")]
    H,
    Auto,
}

impl From<ModelArg> for WantModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::F => WantModel::Fund,
            ModelArg::H => WantModel::Hom,
            ModelArg::Auto => WantModel::Auto,
        }
    }
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Matcher configuration JSON; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args, Debug)]
struct MatchArgs {
    img1: PathBuf,
    img2: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Output directory for report.json and correspondences.csv.
    #[arg(long)]
    out: PathBuf,
    /// Model to estimate; overrides the config file.
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Also write matches.png with the images side by side.
    #[arg(long)]
    viz: bool,
}

#[derive(Args, Debug)]
struct EvalMatcherArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct EvalDescArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated descriptor kinds.
    #[arg(long, value_delimiter = ',', default_value = "sift,rootsift,halfsift,halfrootsift,invsift,raw")]
    desc: Vec<DescriptorKind>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Keypoints detected in each first image at most.
    #[arg(long, default_value_t = 1000)]
    max_features: usize,
    /// Ratio threshold defining the matched sets for complementarity.
    #[arg(long, default_value_t = 0.8)]
    ratio: f64,
}

#[derive(Args, Debug)]
struct SynthDemoArgs {
    #[arg(long)]
    image: PathBuf,
    /// 1-based schedule iteration.
    #[arg(long, default_value_t = 1)]
    iter: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct DetectDemoArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value = "dog")]
    detector: DetectorKind,
    #[arg(long)]
    out: PathBuf,
}

/// Failure classes mapped to exit codes.
enum Outcome {
    Ok,
    MatchFailed,
}

fn load_config(path: Option<&PathBuf>) -> anyhow::Result<MatcherConfig> {
    let cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?
        }
        None => MatcherConfig::default(),
    };
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()?;
    }
    match cli.command {
        Command::Match(a) => matching::run(&a, cli.force),
        Command::EvalMatcher(a) => evaluate::run_matcher(&a, cli.force),
        Command::EvalDesc(a) => evaluate::run_desc(&a, cli.force),
        Command::SynthDemo(a) => demos::synth(&a, cli.force),
        Command::DetectDemo(a) => demos::detect(&a, cli.force),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::MatchFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("wxbs: {e:#}");
            ExitCode::from(2)
        }
    }
}
