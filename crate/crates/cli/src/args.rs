use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use emproj::projection::NoiseMode;
use emproj::scenario::ExpertToggle;
use emproj::sensitivity::{
    DEFAULT_BOOTSTRAP, DEFAULT_N, DEFAULT_THRESHOLD_FIRST, DEFAULT_THRESHOLD_SECOND,
};

#[derive(Debug, Parser)]
#[command(
    name = "emproj",
    version,
    about = "Calibrate, project and analyse the emissions model"
)]
pub struct Cli {
    /// Preset name or path to a scenario TOML file.
    #[arg(long, global = true, default_value = "standard")]
    pub scenario: String,

    /// Observation CSV; defaults to the bundled synthetic record.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Suppress progress messages.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Maximum a posteriori estimate.
    Map(MapArgs),
    /// Adaptive Metropolis-Hastings calibration.
    Calibrate(CalibrateArgs),
    /// Convergence diagnostics and marginal summaries of a saved ensemble.
    Diagnose(EnsembleArg),
    /// Posterior-predictive projection bands and 2100 marginals.
    Project(ProjectArgs),
    /// Empirical CDFs of cumulative 2018-2100 and 2100 emissions.
    Cdf(ProjectArgs),
    /// Compare the projection with reference scenarios and carbon budgets.
    SspCompare(SspArgs),
    /// Sobol indices of cumulative 2018-2100 emissions.
    Sensitivity(SensitivityArgs),
    /// Hold-out cross-validation of predictive coverage.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct MapArgs {
    /// Random prior draws screened before local refinement.
    #[arg(long, default_value_t = 200)]
    pub random_starts: usize,

    /// Best starting points refined by Nelder-Mead.
    #[arg(long, default_value_t = 4)]
    pub local_starts: usize,

    #[arg(long, default_value_t = 200_000)]
    pub max_evaluations: usize,

    /// Expert assessments to include; the scenario setting is kept if absent.
    #[arg(long, value_parser = parse_experts)]
    pub experts: Option<ExpertToggle>,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[arg(long, default_value_t = 4)]
    pub chains: usize,

    #[arg(long, default_value_t = 2_000_000)]
    pub iterations: usize,

    #[arg(long, default_value_t = 500_000)]
    pub burn_in: usize,

    #[arg(long, default_value_t = 100)]
    pub thin: usize,

    #[command(flatten)]
    pub map: MapArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EnsembleArg {
    /// Directory written by `calibrate` (or its `ensemble` subdirectory).
    #[arg(long)]
    pub ensemble: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    On,
    Off,
    /// Process noise plus observation error.
    Observation,
}

impl From<NoiseArg> for NoiseMode {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::On => NoiseMode::Process,
            NoiseArg::Off => NoiseMode::Off,
            NoiseArg::Observation => NoiseMode::ProcessAndObservation,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub ensemble: EnsembleArg,

    #[arg(long, default_value_t = 10_000)]
    pub draws: usize,

    #[arg(long, value_enum, default_value_t = NoiseArg::On)]
    pub noise: NoiseArg,

    #[arg(long, value_delimiter = ',', default_value = "0.05,0.5,0.95")]
    pub quantiles: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SspArgs {
    #[command(flatten)]
    pub projection: ProjectArgs,

    /// Reference table (TOML); the bundled table is used if absent.
    #[arg(long)]
    pub table: Option<PathBuf>,

    /// Restrict the comparison to these scenario keys.
    #[arg(long, value_delimiter = ',')]
    pub keys: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    /// Sample the model-parameter priors.
    Prior,
    /// Sample the marginals of a posterior ensemble.
    Posterior,
}

#[derive(Debug, Clone, Args)]
pub struct SensitivityArgs {
    /// Base sample size (power of two).
    #[arg(long, default_value_t = DEFAULT_N)]
    pub n: usize,

    /// Use the 2^17 base sample of a full-scale analysis.
    #[arg(long, conflicts_with = "n")]
    pub paper_scale: bool,

    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
    pub bootstrap: usize,

    #[arg(long, default_value_t = DEFAULT_THRESHOLD_FIRST)]
    pub threshold_first: f64,

    #[arg(long, default_value_t = DEFAULT_THRESHOLD_SECOND)]
    pub threshold_second: f64,

    #[arg(long, value_enum, default_value_t = DesignArg::Prior)]
    pub design: DesignArg,

    /// Required with `--design posterior`.
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 50)]
    pub folds: usize,

    #[arg(long, default_value_t = 39)]
    pub holdout_years: usize,

    /// Metropolis-Hastings iterations per chain and fold.
    #[arg(long, default_value_t = 50_000)]
    pub fold_iterations: usize,

    /// Burn-in per chain and fold; defaults to 40% of the iterations.
    #[arg(long)]
    pub fold_burn_in: Option<usize>,

    #[arg(long, default_value_t = 4)]
    pub fold_chains: usize,

    #[arg(long, default_value_t = 30)]
    pub fold_thin: usize,

    /// Posterior draws per fold for the predictive distribution.
    #[arg(long, default_value_t = 1000)]
    pub predictive_draws: usize,

    /// Central interval mass whose coverage is reported.
    #[arg(long, default_value_t = 0.9)]
    pub level: f64,

    #[command(flatten)]
    pub map: MapArgs,
}

fn parse_experts(s: &str) -> Result<ExpertToggle, String> {
    s.parse().map_err(|e: emproj::Error| e.to_string())
}
