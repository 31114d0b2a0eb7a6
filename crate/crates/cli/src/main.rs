mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use optidesign::Criterion;

/// Greedy Bayesian experimental design with approximate-supermodularity
/// certificates. Results are JSON (CSV for sweeps); summaries go to stderr.
#[derive(Debug, Parser)]
#[command(name = "optidesign", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Greedy design of size k.
    Design(DesignArgs),
    /// Closed-form suboptimality certificate for greedy.
    Certify(CertifyArgs),
    /// Exhaustive α(a, b) and ε(a, b) tables on a small pool.
    Audit(AuditArgs),
    /// Exact optimum by enumeration on a small pool.
    Oracle(OracleArgs),
    /// Write a synthetic pool as JSON.
    Synth(SynthOutArgs),
    /// SNR sweeps for plotting.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Cold-start recommender: greedy vs. random rating surveys.
    Recsys(RecsysArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize)]
pub enum CriterionArg {
    A,
    E,
    D,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::A => Criterion::A,
            CriterionArg::E => Criterion::E,
            CriterionArg::D => Criterion::D,
        }
    }
}

/// Pool input: a JSON file, or a synthetic pool when `--synth-seed` is given.
#[derive(Debug, Clone, Args, serde::Serialize)]
#[group(id = "source", required = true, multiple = false, args = ["pool", "synth_seed"])]
pub struct PoolSource {
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[arg(long)]
    pub synth_seed: Option<u64>,
    #[command(flatten)]
    pub synth: SynthParams,
}

#[derive(Debug, Clone, Args, serde::Serialize)]
pub struct SynthParams {
    #[arg(long, default_value_t = 20)]
    pub p: usize,
    #[arg(long, default_value_t = 5)]
    pub n_e: usize,
    #[arg(long, default_value_t = 200)]
    pub pool_size: usize,
    /// σ_v². Overrides --snr-db.
    #[arg(long)]
    pub noise_var: Option<f64>,
    /// 10·log10(n_e/σ_v²).
    #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
    pub snr_db: f64,
    #[arg(long, default_value_t = 1.0)]
    pub prior_var: f64,
}

#[derive(Debug, Clone, Args, serde::Serialize)]
pub struct Common {
    #[arg(long, value_enum, ignore_case = true)]
    pub criterion: CriterionArg,
    #[arg(long)]
    pub k: usize,
    /// Draw each experiment at most once.
    #[arg(long)]
    pub without_replacement: bool,
    /// Output path; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct DesignArgs {
    #[command(flatten)]
    pub source: PoolSource,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub source: PoolSource,
    #[command(flatten)]
    pub common: Common,
    /// Greedy steps; defaults to k.
    #[arg(long)]
    pub ell: Option<usize>,
    /// Use the refined α bound built from the largest increments.
    #[arg(long)]
    pub tightened: bool,
    /// Optimal value for the exponential ε bound.
    #[arg(long, allow_negative_numbers = true)]
    pub f_star: Option<f64>,
    /// Result of `design` to check against this pool and certify.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Compute the optimum by enumeration and check the certified inequality.
    #[arg(long)]
    pub with_oracle: bool,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct AuditArgs {
    #[command(flatten)]
    pub source: PoolSource,
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub ell: Option<usize>,
    /// Recompute every gain from two factorizations.
    #[arg(long)]
    pub recompute: bool,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct OracleArgs {
    #[command(flatten)]
    pub source: PoolSource,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct SynthOutArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub synth: SynthParams,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Equivalent α̂ of the A certificate over an SNR grid.
    FigA(SweepArgs),
    /// Equivalent ε̂ of the E certificate over an SNR grid.
    FigE(SweepArgs),
}

#[derive(Debug, Args, serde::Serialize)]
pub struct SweepArgs {
    #[arg(long, default_value_t = -20.0, allow_negative_numbers = true)]
    pub snr_min: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub snr_max: f64,
    #[arg(long, default_value_t = 2.0)]
    pub snr_step: f64,
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub base_seed: u64,
    #[arg(long, default_value_t = 20)]
    pub p: usize,
    #[arg(long, default_value_t = 5)]
    pub n_e: usize,
    #[arg(long, default_value_t = 200)]
    pub pool_size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub prior_var: f64,
    #[arg(long, default_value_t = 40)]
    pub k: usize,
    #[arg(long)]
    pub ell: Option<usize>,
    #[arg(long)]
    pub tightened: bool,
    /// Skip the greedy and random cost columns.
    #[arg(long)]
    pub no_costs: bool,
    /// CSV output path; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct RecsysArgs {
    /// CSV with header user,movie,rating[,genre].
    #[arg(long, conflicts_with = "synth_seed", required_unless_present = "synth_seed")]
    pub ratings: Option<PathBuf>,
    /// Generate low-rank ratings instead of reading a file.
    #[arg(long)]
    pub synth_seed: Option<u64>,
    /// The first N users (by id) train; the rest are test users.
    #[arg(long)]
    pub train_users: usize,
    /// Cap on the number of test users.
    #[arg(long)]
    pub test_users: Option<usize>,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub noise_var: f64,
    #[arg(long, default_value_t = 100.0)]
    pub prior_var: f64,
    #[arg(long, value_enum, default_value_t = ImputeArg::Zero)]
    pub impute: ImputeArg,
    /// Random surveys to compare against greedy.
    #[arg(long, default_value_t = 1)]
    pub random_trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ImputeArg {
    Zero,
    Mean,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = commands::configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<commands::UsageError>().is_some();
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
