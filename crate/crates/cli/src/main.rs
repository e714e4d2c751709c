mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use binpose::config::Ablation;
use clap::{Args, Parser, Subcommand};

/// Symmetry-aware keypoint voting pipelines for bin-picking point clouds.
#[derive(Debug, Parser)]
#[command(name = "binpose", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON pipeline config; fields it sets take precedence over flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for per-scene work (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Output directory.
    #[arg(long, global = true, env = "BINPOSE_OUT", default_value = "binpose-out")]
    pub out: PathBuf,
    /// Object spec file, or `zoo:<name>` for a built-in object.
    #[arg(long, global = true)]
    pub object: Option<String>,
    /// Base seed for all randomness.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Comma-separated components to disable: no-eks, no-kf, no-scd, no-da.
    #[arg(long, global = true, value_parser = parse_ablation)]
    pub ablation: Option<Ablation>,
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    s.parse().map_err(|e: binpose::Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select keypoints and equivalent sets for an object.
    Keypoints,
    /// Synthesize labeled bin-picking scenes.
    Synth(SynthArgs),
    /// Estimate instance poses in scenes.
    Estimate(EstimateArgs),
    /// Score estimated poses and write masked pseudo-labels.
    PseudoLabel(PseudoLabelArgs),
    /// Run the teacher–student loop and report per-round AP as CSV.
    SelfTrain(SelfTrainArgs),
    /// Compute AP of estimated poses against scene ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of scenes.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Instances per scene.
    #[arg(long)]
    pub instances: Option<usize>,
    /// Apply the domain shift (dropout, depth noise, density gradient).
    #[arg(long)]
    pub shift: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Directory of scene clouds with sidecars.
    #[arg(long)]
    pub scenes: PathBuf,
    /// Predict with the ground-truth oracle under the configured noise.
    #[arg(long, conflicts_with_all = ["predictions", "train"])]
    pub oracle: bool,
    /// Directory of `<scene>.pred.json` prediction fields.
    #[arg(long, conflicts_with = "train")]
    pub predictions: Option<PathBuf>,
    /// Labeled scenes used to fit the nearest-neighbor predictor.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Oracle ambiguity probability.
    #[arg(long)]
    pub p_amb: Option<f64>,
    /// Oracle outlier probability.
    #[arg(long)]
    pub p_out: Option<f64>,
    /// Oracle noise standard deviation as a fraction of the diameter.
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PseudoLabelArgs {
    #[arg(long)]
    pub scenes: PathBuf,
    /// Directory of `<scene>.poses.json` files.
    #[arg(long)]
    pub poses: PathBuf,
    /// Threshold offset in standard deviations.
    #[arg(long)]
    pub kappa: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SelfTrainArgs {
    /// Labeled source-domain scenes for the initial teacher.
    #[arg(long)]
    pub source: PathBuf,
    /// Unlabeled target-domain scenes.
    #[arg(long)]
    pub target: PathBuf,
    /// Held-out labeled scenes for the per-round AP.
    #[arg(long)]
    pub validate: PathBuf,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub kappa: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scenes: PathBuf,
    #[arg(long)]
    pub poses: PathBuf,
    /// Correctness threshold as a fraction of the diameter.
    #[arg(long)]
    pub threshold_frac: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
