mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deshadow::data::DatasetName;
use deshadow::metrics::SsimMode;
use deshadow::model::Ablation;

/// Document shadow removal: pyramid tools, training, evaluation and
/// inference.
#[derive(Debug, Parser)]
#[command(name = "deshadow", version)]
pub struct Cli {
    /// Seed for initialisation, sampling and augmentation.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split an image into Laplacian bands (PFM files plus a JSON manifest).
    Decompose(DecomposeArgs),
    /// Rebuild an image from a decomposition manifest.
    Reconstruct(ReconstructArgs),
    /// Train a model on a paired dataset.
    Train(TrainArgs),
    /// Score a checkpoint, or the raw inputs, on a dataset split.
    Eval(EvalArgs),
    /// Remove shadows from one image.
    Infer(InferArgs),
    /// Compare analytic gradients with central differences.
    Gradcheck(GradcheckArgs),
    /// Collect evaluation reports into a comparison table.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetArg {
    Jung,
    Kligler,
}

impl From<DatasetArg> for DatasetName {
    fn from(d: DatasetArg) -> Self {
        match d {
            DatasetArg::Jung => DatasetName::Jung,
            DatasetArg::Kligler => DatasetName::Kligler,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AblationArg {
    Full,
    #[value(name = "no_aan", alias = "no-aan")]
    NoAan,
    #[value(name = "no_gmft", alias = "no-gmft")]
    NoGmft,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::Full => Ablation::Full,
            AblationArg::NoAan => Ablation::NoAan,
            AblationArg::NoGmft => Ablation::NoGmft,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SsimArg {
    Global,
    Windowed,
}

impl From<SsimArg> for SsimMode {
    fn from(s: SsimArg) -> Self {
        match s {
            SsimArg::Global => SsimMode::Global,
            SsimArg::Windowed => SsimMode::Windowed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ResizePolicy {
    /// Refuse images too small for the pyramid depth.
    Fail,
    /// Upscale small images for processing and scale the result back.
    Resize,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Folder holding `jung/` and `kligler/`.
    #[arg(long, env = "DESHADOW_DATA_DIR")]
    pub dataset_root: PathBuf,
    #[arg(long, value_enum)]
    pub dataset: DatasetArg,
    /// Side length images are resized to on load; 0 keeps native size.
    #[arg(long, default_value_t = deshadow::data::CANONICAL_SIZE)]
    pub size: usize,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    /// Output folder.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// `pyramid.json` written by `decompose`, or its folder.
    #[arg(long)]
    pub input: PathBuf,
    /// Output image, `.png` or `.pfm`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output folder for logs and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
    /// Model configuration (TOML); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long, value_enum, default_value = "full")]
    pub ablation: AblationArg,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Evaluate on the test split every N steps; 0 disables.
    #[arg(long, default_value_t = 0)]
    pub eval_every: usize,
    /// SSIM statistics used by the training loss.
    #[arg(long, value_enum, default_value = "windowed")]
    pub ssim_mode: SsimArg,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    /// Random crop side.
    #[arg(long, default_value_t = 256)]
    pub crop: usize,
    /// Train on whole images without flips, jitter, resizing or mixup.
    #[arg(long)]
    pub no_augment: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Without a checkpoint the raw shadow images are scored.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Must match the checkpoint when both are given.
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long, value_enum, default_value = "global")]
    pub ssim_mode: SsimArg,
    /// Method name written to the report.
    #[arg(long)]
    pub method: Option<String>,
    /// Folder for `metrics.csv` and `metrics.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write `input | output | target` images to `<out>/compare/`.
    #[arg(long, requires = "out")]
    pub compare_images: bool,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
    /// Must match the checkpoint when given.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Shadow-free reference, appended to the triptych.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Write `input | output [| target]` side by side here.
    #[arg(long)]
    pub triptych: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "fail")]
    pub resize_policy: ResizePolicy,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Model configuration (TOML); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long, default_value_t = deshadow::gradcheck::DEFAULT_STEP)]
    pub step: f64,
    #[arg(long, default_value_t = deshadow::gradcheck::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Coordinates sampled per tensor.
    #[arg(long, default_value_t = 6)]
    pub samples: usize,
    /// Only these blocks (repeatable).
    #[arg(long = "block")]
    pub blocks: Vec<String>,
    /// Scale one block's analytic gradient (negative control).
    #[arg(long, hide = true)]
    pub corrupt: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `metrics.json` files written by `eval`.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    /// Folder for `table.csv` and `table.md`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
