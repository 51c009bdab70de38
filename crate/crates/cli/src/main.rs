//! `bogwatch`: sky-image irradiance nowcasting, berry counting and crop-risk reports.

mod commands;
mod util;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "bogwatch", version, about = "Crop-risk monitoring from sky images, weather and field masks")]
pub struct Cli {
    /// Pipeline configuration file (TOML); supplies defaults for every stage.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for every random sub-stream; overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory, or output file for commands that write one file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Per-pixel cloud probability images for every frame in a directory.
    SegmentClouds(SegmentArgs),
    /// Forward/backward-checked optical flow between consecutive frames.
    Flow(FlowArgs),
    /// Irradiance forecast from the last two frames of a sky sequence.
    Forecast(ForecastArgs),
    /// Fit a clear-sky table to the upper envelope of measured irradiance.
    ClearskyFit(ClearskyFitArgs),
    /// Train a berry temperature model from weather and probe readings.
    TrainTemp(TrainTempArgs),
    /// Predict berry temperature for every weather row.
    PredictTemp(PredictTempArgs),
    /// Count berries in segmentation masks.
    CountBerries(CountArgs),
    /// Grid per-tile berry counts into a density map.
    DensityMap(DensityArgs),
    /// Write a complete simulated input directory.
    Simulate(SimulateArgs),
    /// Run the whole pipeline and write the forecast and risk report.
    Run,
    /// Compare a predicted series or mask with the truth.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    /// Frame image or directory of frames.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Blue/red ratio threshold.
    #[arg(long = "t")]
    pub threshold: Option<f64>,
    /// Logistic steepness.
    #[arg(long = "k")]
    pub steepness: Option<f64>,
    /// Camera file; pixels outside its field get probability 0.
    #[arg(long)]
    pub camera: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FlowArgs {
    /// Directory of frames, ordered by `frames.csv` when present, else by name.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Forward/backward consistency tolerance, pixels.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ForecastArgs {
    /// Directory with frames and `frames.csv`.
    #[arg(long)]
    pub sky: PathBuf,
    #[arg(long)]
    pub camera: PathBuf,
    #[arg(long)]
    pub site: PathBuf,
    /// Horizon, seconds.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Step, seconds.
    #[arg(long)]
    pub step: Option<f64>,
    /// Clear-sky model file; analytic default when absent.
    #[arg(long)]
    pub clear_sky: Option<PathBuf>,
    /// Attenuation α.
    #[arg(long)]
    pub attenuation: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ClearskyFitArgs {
    #[arg(long)]
    pub weather: PathBuf,
    #[arg(long)]
    pub site: PathBuf,
    /// Upper-envelope quantile per elevation bin.
    #[arg(long, default_value_t = bogwatch_core::solar::DEFAULT_CLEAR_SKY_QUANTILE)]
    pub quantile: f64,
}

#[derive(Args, Debug)]
pub struct TrainTempArgs {
    #[arg(long)]
    pub weather: PathBuf,
    /// CSV with `timestamp,berry_temp`.
    #[arg(long)]
    pub target: PathBuf,
    /// forest or mlp.
    #[arg(long, default_value = "forest")]
    pub model: bogwatch_core::temp::ModelKind,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Also report temporal cross-validation with this many folds.
    #[arg(long, default_value_t = 0)]
    pub cv_folds: usize,
}

#[derive(Args, Debug)]
pub struct PredictTempArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub weather: PathBuf,
    /// Replace every row's irradiance with this value, W/m².
    #[arg(long)]
    pub irradiance: Option<f64>,
}

#[derive(Args, Debug)]
pub struct WatershedArgs {
    #[arg(long)]
    pub min_split_area: Option<usize>,
    #[arg(long)]
    pub min_marker_sep: Option<f64>,
}

#[derive(Args, Debug)]
pub struct CountArgs {
    /// Mask image, directory of masks, or tile manifest CSV.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// CSV with `filename,true_count` to score against.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    pub watershed: WatershedArgs,
}

#[derive(Args, Debug)]
pub struct DensityArgs {
    /// Tile manifest CSV (`filename,easting_m,northing_m`).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Cell size, metres.
    #[arg(long)]
    pub cell: Option<f64>,
    /// Extent as `min_e,min_n,max_e,max_n`; tile bounding box when absent.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub extent: Option<Vec<f64>>,
    /// Also write a grayscale heat image.
    #[arg(long)]
    pub heat: Option<PathBuf>,
    #[command(flatten)]
    pub watershed: WatershedArgs,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Sky scenario: clear, thin-cloud, opaque-crossing, pop-up, static-overcast or multi-cloud.
    #[arg(long, default_value = "opaque-crossing")]
    pub scenario: String,
    #[arg(long, default_value_t = 4)]
    pub frames: usize,
    /// Seconds between frames.
    #[arg(long, default_value_t = 5.0)]
    pub frame_dt: f64,
    #[arg(long, default_value_t = 14)]
    pub weather_days: usize,
    #[arg(long, default_value_t = 16)]
    pub tiles: usize,
    /// Temperature threshold written into the generated config, °F.
    #[arg(long, default_value_t = 113.0)]
    pub temp_threshold: f64,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Predicted series CSV, or predicted mask image for `iou`.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Comma-separated: mape, r2, frechet, mae, iou.
    #[arg(long, value_delimiter = ',', default_value = "mape,r2,frechet")]
    pub metrics: Vec<String>,
    /// Value column; defaults to the last column of each file.
    #[arg(long)]
    pub column: Option<String>,
    /// MAPE on min-max normalised series with a zero guard.
    #[arg(long)]
    pub normalized: bool,
    /// R² as a ratio of norms rather than squared norms.
    #[arg(long)]
    pub r2_norm_ratio: bool,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = commands::dispatch(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
