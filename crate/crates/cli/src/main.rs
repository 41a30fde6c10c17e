//! `chess-saliency`: dataset generation, augmentation, training, evaluation,
//! prediction and rendering.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use chess_saliency::chess::Color;
use chess_saliency::nn::{Loss, Recipe};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "chess-saliency", version, about = "Chess visual-attention datasets and saliency models")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Side {
    White,
    Black,
}

impl From<Side> for Color {
    fn from(s: Side) -> Color {
        match s {
            Side::White => Color::White,
            Side::Black => Color::Black,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Four-block encoder, 16..64 channels, D = 32.
    Default,
    /// Four single-conv blocks, 8..16 channels, D = 8.
    Toy,
    /// Three single-conv blocks of 4 channels, D = 4.
    Tiny,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the games-derived (GD) dataset from a PGN file (plain or .gz).
    GenGd(GenGdArgs),
    /// Build eye-tracking (ET) samples from a fixation CSV and task images.
    IngestEt(IngestEtArgs),
    /// Import external image + saliency-map pairs as an EXTERNAL dataset.
    ImportExternal(ImportExternalArgs),
    /// Expand a dataset by colour inversion, perspective flip and sliding windows.
    Augment(AugmentArgs),
    /// Train a model with one of the pretrain/fine-tune recipes.
    Train(TrainArgs),
    /// Score a model on a dataset, optionally per cross-validation fold.
    Eval(EvalArgs),
    /// Predict the saliency map of a position or image.
    Predict(PredictArgs),
    /// Render a position to PNG.
    Render(RenderArgs),
    /// Verify backpropagation on the tiny model against finite differences.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Args)]
pub struct GenGdArgs {
    #[arg(long)]
    pub pgn: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Saliency of the squares a sliding piece passes over.
    #[arg(long, default_value_t = 0.5)]
    pub path_level: f64,
    /// Only emit the mover's view of each position.
    #[arg(long)]
    pub single_perspective: bool,
    #[arg(long)]
    pub limit_games: Option<usize>,
    /// Board side in pixels (multiple of 8).
    #[arg(long, default_value_t = 256)]
    pub size: usize,
}

#[derive(Debug, Args)]
pub struct IngestEtArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub images: PathBuf,
    /// Gaussian sigma in pixels.
    #[arg(long, default_value_t = 32.0)]
    pub sigma: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportExternalArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub maps: PathBuf,
    /// Side length the pairs are resized to.
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Window sizes in cells; an empty list keeps the full board.
    #[arg(long, value_delimiter = ',', default_value = "3,4,5")]
    pub sizes: Vec<u8>,
    #[arg(long)]
    pub no_invert: bool,
    #[arg(long)]
    pub no_flip: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub pretrain: Option<PathBuf>,
    #[arg(long, default_value = "v5")]
    pub recipe: Recipe,
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    /// Pretraining epochs; defaults to --epochs.
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.0)]
    pub momentum: f64,
    #[arg(long, default_value = "bce")]
    pub loss: Loss,
    #[arg(long, default_value_t = 0.0)]
    pub aux_weight: f64,
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    pub preset: Preset,
    /// Restrict the fine-tuning data to these task (or game) ids.
    #[arg(long, value_delimiter = ',')]
    pub tasks: Vec<String>,
    /// Initialise the encoder from a weight file before training.
    #[arg(long)]
    pub encoder_weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Split the evaluation tasks into this many folds and report each.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Only evaluate these task (or game) ids.
    #[arg(long, value_delimiter = ',')]
    pub tasks: Vec<String>,
    #[arg(long, default_value_t = 100)]
    pub borji_splits: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["fen", "image"]))]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub fen: Option<String>,
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Side::White)]
    pub perspective: Side,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub overlay: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub fen: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Side::White)]
    pub perspective: Side,
    #[arg(long, default_value_t = 256)]
    pub size: usize,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub coordinates: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    let result = match cli.command {
        Command::GenGd(a) => commands::gen_gd(&a),
        Command::IngestEt(a) => commands::ingest_et(&a),
        Command::ImportExternal(a) => commands::import_external(&a),
        Command::Augment(a) => commands::augment(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Render(a) => commands::render(&a),
        Command::GradCheck(a) => commands::grad_check(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
