//! `fbg-tpe`: simulate, reconstruct, train, predict and evaluate tip
//! position estimators from FBG wavelength data.
//!
//! Exit status: 0 on success, 1 for usage errors, 2 for bad input data or
//! configuration, 3 when a numerical procedure fails.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fbg_tpe::ErrorKind;

#[derive(Parser, Debug)]
#[command(
    name = "fbg-tpe",
    version,
    about = "Tip position estimation from FBG shape-sensor data"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Directory holding default geometry.toml and scenario.toml.
    #[arg(long, global = true, env = "FBG_TPE_CONFIG_DIR", value_name = "DIR")]
    config_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate wavelength, tracker and ground-truth streams from a scenario.
    Simulate(SimulateArgs),
    /// Map a tracker stream to the base frame and pair it with wavelengths.
    Align(AlignArgs),
    /// Conventional shape reconstruction of every wavelength frame.
    Reconstruct(ReconstructArgs),
    /// Fit a regression model on aligned pairs.
    Train(TrainArgs),
    /// Apply a trained model to a wavelength stream.
    Predict(PredictArgs),
    /// Repeated train/test evaluation of one method.
    Evaluate(EvaluateArgs),
    /// Side-by-side evaluation of several methods on identical splits.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
struct GeometryArg {
    /// Sensor geometry TOML (default: the dataset's or config dir's geometry).
    #[arg(long, value_name = "FILE")]
    geometry: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario TOML (default: config dir scenario.toml, else built-in).
    #[arg(long, value_name = "FILE")]
    scenario: Option<PathBuf>,
    #[command(flatten)]
    geometry: GeometryArg,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AlignArgs {
    #[command(flatten)]
    geometry: GeometryArg,
    /// Wavelength CSV.
    #[arg(long, value_name = "FILE")]
    fbg: PathBuf,
    /// Tracker CSV in the tracker frame.
    #[arg(long, value_name = "FILE")]
    tracker: PathBuf,
    /// Registration transforms TOML.
    #[arg(long, value_name = "FILE")]
    transforms: PathBuf,
    #[arg(long, value_enum, default_value_t = InterpolationArg::Linear)]
    interpolation: InterpolationArg,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    #[command(flatten)]
    geometry: GeometryArg,
    /// Wavelength CSV.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    #[arg(long, default_value_t = 1000)]
    segments: usize,
    /// Polynomial order of the curvature and bend-angle profiles.
    #[arg(long, default_value_t = 1)]
    order: usize,
    #[arg(long, value_enum, default_value_t = ShiftArg::SensorChannel)]
    shift: ShiftArg,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Fibers used as inputs, by letter.
    #[arg(long, default_value = "abc")]
    fibers: String,
    /// Append a constant column to the design matrix.
    #[arg(long, overrides_with = "no_bias")]
    bias: bool,
    #[arg(long = "no-bias", overrides_with = "bias")]
    no_bias: bool,
    /// Subtract the geometry's base wavelengths before fitting.
    #[arg(long)]
    delta: bool,
}

impl ModelArgs {
    fn bias(&self) -> bool {
        !self.no_bias
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    geometry: GeometryArg,
    /// Aligned-pairs CSV.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    geometry: GeometryArg,
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Wavelength CSV.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Output directory of `simulate` (aligned.csv, truth.csv, geometry).
    #[arg(long, value_name = "DIR", required_unless_present = "aligned")]
    data: Option<PathBuf>,
    /// Aligned-pairs CSV, instead of --data.
    #[arg(long, value_name = "FILE", conflicts_with = "data")]
    aligned: Option<PathBuf>,
    /// Exact tips CSV matched to the pairs by timestamp.
    #[arg(long, value_name = "FILE", requires = "aligned")]
    truth: Option<PathBuf>,
    #[command(flatten)]
    geometry: GeometryArg,
}

#[derive(Args, Debug)]
struct ProtocolArgs {
    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Base seed; repeat i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Integration segments of the conventional method.
    #[arg(long, default_value_t = 1000)]
    segments: usize,
    /// Reference for errors: exact simulator tips or the tracker stream.
    #[arg(long, value_enum, default_value_t = AgainstArg::Exact)]
    against: AgainstArg,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// `conventional` or `regression`; regression uses --fibers.
    #[arg(long, default_value = "regression")]
    method: String,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// Comma-separated methods.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "conventional,regression-1f,regression-2f,regression-3f"
    )]
    methods: Vec<String>,
    #[arg(long, overrides_with = "no_bias")]
    bias: bool,
    #[arg(long = "no-bias", overrides_with = "bias")]
    no_bias: bool,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum InterpolationArg {
    Linear,
    Nearest,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ShiftArg {
    SensorChannel,
    BendPlane,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AgainstArg {
    Exact,
    Tracker,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<fbg_tpe::Error>())
        .map(fbg_tpe::Error::kind);
    match kind {
        Some(ErrorKind::Numerical) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
