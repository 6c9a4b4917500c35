//! Command-line front end for blurbench.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors
//! (bad flags, missing mode-dependent options, unreadable config file).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod config;

pub use config::expand_config;

#[derive(Debug, Parser, Serialize)]
#[command(name = "blurbench", version, about = "Motion-blur benchmark toolkit for visual place recognition")]
pub struct Cli {
    /// Seed for every random draw (mix shuffles).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Report errors on stderr as single-line JSON.
    #[arg(long, global = true)]
    pub json: bool,
    /// JSON file with default flag values; explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Synthesize blurred traverse images from a frame directory.
    Synth(SynthArgs),
    /// Build pair manifests and shuffled blur mixes.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Compute SAD descriptors for a traverse.
    Describe(DescribeArgs),
    /// Evaluate AUC across blur levels into a results grid.
    Evaluate(EvaluateArgs),
    /// Score images with the Laplacian-variance blur detector.
    Detect(DetectArgs),
    /// Calibrate a sharp/blurred threshold from labeled images.
    Calibrate(CalibrateArgs),
    /// Run an adaptive deblurring pipeline over a blur mix.
    Adaptive(AdaptiveArgs),
    /// Summarize pipeline stats files into one table.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Directory of numbered sharp frames.
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long, default_value_t = 240.0)]
    pub fps: f64,
    /// Output root; images go to <out>/<name>/<LLL>/<PPPPPP>.png.
    #[arg(long)]
    pub out: PathBuf,
    /// Traverse name; defaults to the frame directory name.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, default_value = "custom")]
    pub route: String,
    /// Condition tags (MB, W, I, VP).
    #[arg(long, value_delimiter = ',')]
    pub conditions: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub levels: Vec<u32>,
    /// Frames between place anchors; defaults to the max level.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Anchor window length; defaults to the largest scheduled level.
    #[arg(long)]
    pub max_level: Option<usize>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum DatasetCommand {
    /// Write a query/reference pair manifest.
    Pair(PairArgs),
    /// Write a seeded shuffled mix of blur levels over one traverse.
    Mix(MixArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct PairArgs {
    #[arg(long)]
    pub name: String,
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub query_level: u32,
    #[arg(long)]
    pub reference: PathBuf,
    /// Identity ground-truth tolerance in places.
    #[arg(long, default_value_t = 1)]
    pub tolerance: usize,
    /// query<TAB>ref_low<TAB>ref_high file replacing the identity mapping.
    #[arg(long)]
    pub correspondence: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct MixArgs {
    #[arg(long)]
    pub traverse: PathBuf,
    /// Level:fraction pairs, e.g. 1:0.5,60:0.125,80:0.125,120:0.125,240:0.125
    #[arg(long, value_delimiter = ',', required = true)]
    pub proportions: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize, Clone, Copy)]
pub struct SadArgs {
    #[arg(long, default_value_t = 64)]
    pub down_w: usize,
    #[arg(long, default_value_t = 32)]
    pub down_h: usize,
    #[arg(long, default_value_t = 8)]
    pub patch: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct DescribeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Levels to describe; defaults to every level of the traverse.
    #[arg(long, value_delimiter = ',')]
    pub levels: Vec<u32>,
    /// Descriptor root; files go to <out-dir>/<traverse>/L<LLL>.bbd.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub sad: SadArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricArg {
    NegMad,
    Cosine,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Pair manifest; repeat for several rows.
    #[arg(long = "pair", required = true)]
    pub pairs: Vec<PathBuf>,
    /// `sad` for native descriptors or `method[:deblur]=dir` for files laid
    /// out as <dir>/<traverse>/L<LLL>.bbd. Defaults to `sad`.
    #[arg(long = "source")]
    pub sources: Vec<String>,
    /// Overrides the per-source default (neg-mad for sad, cosine otherwise).
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long, value_delimiter = ',')]
    pub levels: Vec<u32>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also dump per-cell PR points as JSON.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// Exit 0 even when cells could not be evaluated.
    #[arg(long)]
    pub allow_missing: bool,
    #[command(flatten)]
    pub sad: SadArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct DetectArgs {
    /// Image files or directories.
    #[arg(long = "image")]
    pub images: Vec<PathBuf>,
    /// Traverse manifest, scored at --level.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub level: u32,
    #[arg(long)]
    pub threshold_file: Option<PathBuf>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    /// Sharp image files or directories.
    #[arg(long)]
    pub sharp: Vec<PathBuf>,
    /// Blurred image files or directories.
    #[arg(long)]
    pub blurred: Vec<PathBuf>,
    /// Traverse manifest providing both populations by level.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub sharp_level: u32,
    #[arg(long, default_value_t = 240)]
    pub blurred_level: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    NoDeblur,
    AllDeblur,
    #[value(alias = "detect-deblur")]
    Detect,
}

#[derive(Debug, Args, Serialize)]
pub struct AdaptiveArgs {
    #[arg(long)]
    pub mix: PathBuf,
    /// Traverse the mix was drawn from.
    #[arg(long)]
    pub traverse: PathBuf,
    /// Sharp reference traverse; defaults to --traverse.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub tolerance: usize,
    #[arg(long)]
    pub correspondence: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long)]
    pub threshold_file: Option<PathBuf>,
    /// Deblurrer command with {in_dir} and {out_dir} placeholders.
    #[arg(long)]
    pub deblur_cmd: Option<String>,
    #[arg(long, default_value_t = 600.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// timestamp_s,watts CSV sampled during the run.
    #[arg(long)]
    pub power_log: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "neg-mad")]
    pub metric: MetricArg,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sad: SadArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Stats JSON files written by `adaptive`.
    #[arg(long = "stats", required = true)]
    pub stats: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<blurbench::Error> for CliError {
    fn from(e: blurbench::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn report_error(err: &CliError, json: bool) {
    if json {
        let line = serde_json::json!({ "error": err.message(), "exit_code": err.exit_code() });
        eprintln!("{line}");
    } else {
        eprintln!("error: {}", err.message());
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let json = args.iter().any(|a| a == "--json");
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            report_error(&e, json);
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if json && code == 2 {
                report_error(&CliError::Usage(e.kind().to_string()), true);
                let _ = e.print();
            } else {
                let _ = e.print();
            }
            return code;
        }
    };
    if let Some(jobs) = cli.jobs {
        // Fails only if a pool already exists, e.g. when run twice in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
    }
    match commands::dispatch(&cli, &args) {
        Ok(()) => 0,
        Err(e) => {
            report_error(&e, cli.json);
            e.exit_code()
        }
    }
}
