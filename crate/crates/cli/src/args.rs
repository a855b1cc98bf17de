use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use meshstyle::dataset::Resolution;

/// Shape-style transfer between posed body meshes.
#[derive(Debug, Parser)]
#[command(name = "meshstyle", version, about)]
pub struct Cli {
    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic shape × pose grid of bodies.
    GenData(GenDataArgs),
    /// Train a transfer model on a generated grid.
    Train(TrainArgs),
    /// Transfer the shape of an identity mesh onto a posed mesh.
    Transfer(TransferArgs),
    /// Score a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Train two configurations and print their metrics side by side.
    Ablate(AblateArgs),
    /// Write a (posed, identity, ground truth) triple as OBJ files.
    ExportPair(ExportPairArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Dataset config file (`key = value` lines); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub shapes: Option<usize>,
    #[arg(long)]
    pub poses: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Target fraction of validation bodies.
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long)]
    pub resolution: Option<Resolution>,
    /// Output directory [default: $MESHSTYLE_OUT_DIR/data or out/data].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Training flags that override the config file.
#[derive(Debug, Default, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Sets both learning rates.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub generator_lr: Option<f64>,
    #[arg(long)]
    pub discriminator_lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<u64>,
    /// Divide every network width by this factor.
    #[arg(long)]
    pub width_divisor: Option<usize>,
    /// Train without the discriminator and adversarial term.
    #[arg(long)]
    pub no_discriminator: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Training config, TOML or JSON; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory [default: $MESHSTYLE_OUT_DIR/run or out/run].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from a checkpoint with training state.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "f32")]
    pub precision: Precision,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub posed: PathBuf,
    #[arg(long)]
    pub identity: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub split: SplitArg,
    /// Also write per-pair metrics as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config_a: PathBuf,
    #[arg(long)]
    pub config_b: PathBuf,
    #[arg(long, default_value = "A")]
    pub name_a: String,
    #[arg(long, default_value = "B")]
    pub name_b: String,
    /// Where both runs and the table are written [default: $MESHSTYLE_OUT_DIR/ablation or out/ablation].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `steps` in both configs.
    #[arg(long)]
    pub steps: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ExportPairArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Evaluation split to draw the pair from.
    #[arg(long, value_enum, default_value = "validation")]
    pub split: SplitArg,
    /// Index into the split's evaluation pairs.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Also write the model's transfer of the pair.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// [default: $MESHSTYLE_OUT_DIR/pair or out/pair]
    #[arg(long)]
    pub out: Option<PathBuf>,
}
