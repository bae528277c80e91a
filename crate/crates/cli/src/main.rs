//! `certcal` command-line interface.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "certcal", version, about = "Calibration of certainty-phrase predictions")]
pub struct Cli {
    /// Where to write the run manifest. Defaults to `<first output>.manifest.json`.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a lexicon from a phrase,mean,variance survey by method of moments.
    LexiconFit {
        #[arg(long)]
        survey: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure calibration of a records file.
    Measure(MeasureArgs),
    /// Solve for a phrase recalibration policy.
    Calibrate(CalibrateArgs),
    /// Rewrite the phrases of a records file through a policy.
    Apply(ApplyArgs),
    /// Generate records from an agent spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, env = "CERTCAL_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a scalar baseline (Platt scaling or histogram binning).
    Baseline(BaselineArgs),
    /// Re-run a command from its manifest and check its outputs are identical.
    Replay {
        #[arg(value_name = "MANIFEST")]
        path: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub label_lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = certcal::measure::DEFAULT_BINS)]
    pub bins: usize,
    /// Bootstrap resamples.
    #[arg(long, default_value_t = certcal::measure::DEFAULT_RESAMPLES)]
    pub bootstrap: usize,
    #[arg(long, env = "CERTCAL_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = MassArg::Exact)]
    pub mass_mode: MassArg,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Reliability diagram; format from the extension (svg, csv or json).
    #[arg(long)]
    pub diagram: Option<PathBuf>,
    /// Draw the continuous curve instead of the binned one.
    #[arg(long)]
    pub curve: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MassArg {
    Exact,
    Midpoint,
    MidpointExactExtremes,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Stochastic,
    Argmax,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub source_lexicon: PathBuf,
    /// Defaults to the source lexicon.
    #[arg(long)]
    pub target_lexicon: Option<PathBuf>,
    #[arg(long)]
    pub label_lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = certcal::measure::DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e4)]
    pub tau1: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub tau2: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    /// Target weights, comma separated. Switches to the balanced solver.
    #[arg(long, value_delimiter = ',')]
    pub balanced_b: Option<Vec<f64>>,
    /// Stratified calibration:test split, e.g. `0.5:0.5`.
    #[arg(long)]
    pub split: Option<String>,
    /// Where to write the held-out split.
    #[arg(long)]
    pub test_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Stochastic)]
    pub mode: ModeArg,
    #[arg(long, env = "CERTCAL_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Transport export (cost, plan, policy); format from the extension.
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub policy: PathBuf,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub policy: PathBuf,
    /// Overrides the mode stored in the policy.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, env = "CERTCAL_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Platt,
    Binning,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// Records the model is fitted on.
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub label_lexicon: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long, default_value_t = certcal::measure::DEFAULT_BINS)]
    pub bins: usize,
    /// Records to score. Defaults to the fitting records.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    /// CSV of `id,score,calibrated,target`.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse_from(&argv);
    match manifest::run(cli, &argv[1..]) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
