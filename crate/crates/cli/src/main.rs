//! `msl` — command-line front end for the spin-system toolkit.
//!
//! Subcommands mirror the library layout: `model` (generate/inspect),
//! `sample` (chain simulation and exact class sampling), `metastability`
//! (stationarity-defect and mixing diagnostics), `cw` (fully-connected
//! model analyses), `learn` (parameter/structure estimation), `verify`
//! (the inequality audit suite), and `experiment` (end-to-end presets).
//!
//! Exit codes: 0 success, 1 parse/validation/runtime errors, 2 audit-suite
//! violations. Every emitted file carries a provenance header (tool
//! version, seed, parameters); the only non-deterministic byte in any
//! output is the timestamp, which sits alone on its own header line.

mod commands;
mod experiments;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use provenance::Failure;

#[derive(Parser)]
#[command(
    name = "msl",
    version,
    about = "Sampling, stationarity-defect measurement, and learning for ±1 spin systems"
)]
struct Cli {
    /// Worker threads for parallel fits (default: all cores).
    #[arg(long, global = true, env = "MSL_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and inspect coupling models.
    Model {
        #[command(subcommand)]
        action: ModelAction,
    },
    /// Draw samples by chain simulation or exact class sampling.
    Sample {
        #[command(subcommand)]
        action: SampleAction,
    },
    /// Stationarity-defect and mixing diagnostics for a model's chain.
    Metastability {
        #[command(subcommand)]
        action: MetastabilityAction,
    },
    /// Fully-connected (mean-field) model analyses.
    Cw(CwArgs),
    /// Fit parameters, structure, or grid landscapes from samples.
    Learn {
        #[command(subcommand)]
        action: LearnAction,
    },
    /// Run the inequality audit suite and report violations.
    Verify(VerifyArgs),
    /// Run a named end-to-end experiment preset.
    Experiment(ExperimentArgs),
}

#[derive(Subcommand)]
enum ModelAction {
    /// Generate a random bounded-degree model and write it as JSON.
    Gen(ModelGenArgs),
    /// Print a summary of a model file.
    Show {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Args)]
pub struct ModelGenArgs {
    /// Number of spins.
    #[arg(long)]
    pub n: usize,
    /// Maximum node degree.
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    /// Lower coupling magnitude.
    #[arg(long, default_value_t = 0.2)]
    pub coupling_min: f64,
    /// Upper coupling magnitude (signs are random).
    #[arg(long, default_value_t = 0.8)]
    pub coupling_max: f64,
    /// Fields are drawn uniformly from [-field-max, field-max].
    #[arg(long, default_value_t = 0.2)]
    pub field_max: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite an existing output file.
    #[arg(long)]
    pub force: bool,
}

#[derive(Subcommand)]
enum SampleAction {
    /// Single-site heat-bath chain on a model file.
    Glauber(ChainSampleArgs),
    /// Single-site Metropolis chain on a model file.
    Metropolis(ChainSampleArgs),
    /// Exact sampler for the fully-connected model, by magnetization class.
    ExactCw(ExactCwArgs),
}

#[derive(Args)]
pub struct ChainSampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Total single-site updates.
    #[arg(long)]
    pub steps: u64,
    /// Updates discarded before recording starts.
    #[arg(long, default_value_t = 0)]
    pub burn_in: u64,
    /// Record every k-th state after burn-in.
    #[arg(long, default_value_t = 1)]
    pub thinning: u64,
    #[arg(long)]
    pub seed: u64,
    /// Initial configuration (`random` derives it from --seed).
    #[arg(long, value_enum, default_value_t = StartState::AllUp)]
    pub start: StartState,
    #[arg(long, value_enum, default_value_t = FileFormat::Text)]
    pub format: FileFormat,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StartState {
    AllUp,
    AllDown,
    Random,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FileFormat {
    /// Header line plus one row of ±1 entries per sample.
    Text,
    /// Bit-packed; carries no seed/parameter metadata.
    Binary,
}

#[derive(Args)]
pub struct ExactCwArgs {
    /// Number of spins.
    #[arg(long)]
    pub n: usize,
    /// Coupling J (interaction J/n per pair).
    #[arg(long = "J", allow_hyphen_values = true)]
    pub j: f64,
    /// External field (positive favors the negative-magnetization side).
    #[arg(long, allow_hyphen_values = true)]
    pub h: f64,
    /// Magnetization weight family to sample from.
    #[arg(long, value_enum, default_value_t = ProfileFamily::Gibbs)]
    pub family: ProfileFamily,
    /// Number of samples.
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = FileFormat::Text)]
    pub format: FileFormat,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileFamily {
    /// Exact Gibbs class weights.
    Gibbs,
    /// Quadratic expansion of the free energy at its positive minimum.
    #[value(name = "taylor2")]
    Taylor2,
    /// Quartic expansion at the positive minimum.
    #[value(name = "taylor4")]
    Taylor4,
    /// Gibbs weights cut off outside a window around the positive minimum.
    Truncated,
}

#[derive(Subcommand)]
enum MetastabilityAction {
    /// One-step total-variation drift of a distribution under the chain.
    Weak(DefectArgs),
    /// Detailed-balance defect of a distribution under the chain.
    Strong(DefectArgs),
    /// Outflow rate of a restriction set, or the chain-wide bottleneck.
    Conductance(ConductanceArgs),
    /// Spectral gap 1 − λ₂ of the chain.
    Gap(GapArgs),
}

#[derive(Args)]
pub struct DefectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = ChainChoice::Glauber)]
    pub chain: ChainChoice,
    /// Measure ν = μ conditioned to a set: majority | mode | count-ge:<k>.
    #[arg(long, conflicts_with = "samples")]
    pub restrict: Option<String>,
    /// Measure the empirical distribution of a sample file.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct ConductanceArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = ChainChoice::Glauber)]
    pub chain: ChainChoice,
    /// Specific set (majority | mode | count-ge:<k>); omit to minimize
    /// over all sets of stationary mass ≤ 1/2.
    #[arg(long)]
    pub restrict: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct GapArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = ChainChoice::Glauber)]
    pub chain: ChainChoice,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChainChoice {
    Glauber,
    Metropolis,
}

#[derive(Args)]
struct CwArgs {
    /// Number of spins (for eta-scan: the largest size in the ladder).
    #[arg(long)]
    n: usize,
    /// Coupling J.
    #[arg(long = "J", allow_hyphen_values = true)]
    j: f64,
    /// External field.
    #[arg(long, allow_hyphen_values = true)]
    h: f64,
    #[command(subcommand)]
    action: CwAction,
}

#[derive(Subcommand)]
enum CwAction {
    /// Free-energy curve and exact class probabilities over all levels.
    FreeEnergy {
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Locate the positive-side local free-energy minimum.
    M0 {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Stationarity defect vs size for a weight family, doubling sizes
    /// from --min-n up to --n.
    EtaScan {
        #[arg(long, value_enum)]
        family: ProfileFamily,
        #[arg(long, default_value_t = 64)]
        min_n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
}

#[derive(Subcommand)]
enum LearnAction {
    /// ℓ1-constrained per-node logistic fit of couplings and fields.
    Fit(FitArgs),
    /// Edge set by thresholding fitted couplings at --alpha / 2.
    Structure(StructureArgs),
    /// Re-fit per-node fields with couplings frozen at a reference model's.
    Fields(FieldsArgs),
    /// Exact likelihood landscape on a (J, h) grid (fully-connected model).
    GridMle(GridLearnArgs),
    /// Conditional-likelihood landscape on a (J, h) grid.
    GridPl(GridLearnArgs),
}

#[derive(Args)]
pub struct FitArgs {
    #[arg(long)]
    pub samples: PathBuf,
    /// ℓ1 radius of each node's parameter ball.
    #[arg(long)]
    pub radius: f64,
    #[arg(long, default_value_t = 50_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct StructureArgs {
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub radius: f64,
    /// Smallest coupling magnitude the model is declared to contain.
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct FieldsArgs {
    #[arg(long)]
    pub samples: PathBuf,
    /// Model file providing the frozen couplings.
    #[arg(long)]
    pub model: PathBuf,
    /// Field search interval is [-h-max, h-max].
    #[arg(long)]
    pub h_max: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct GridLearnArgs {
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub j_min: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub j_max: f64,
    #[arg(long)]
    pub j_step: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub h_min: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub h_max: f64,
    #[arg(long)]
    pub h_step: f64,
    /// Also write the full landscape as CSV (columns J, h, value).
    #[arg(long)]
    pub surface: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip audit batteries whose models exceed this many spins.
    #[arg(long, default_value_t = 8)]
    pub max_n: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct ExperimentArgs {
    #[arg(long, value_enum)]
    pub preset: Preset,
    /// Output directory (default: msl-experiments/<preset>).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Override the preset's fixed seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub force: bool,
    /// Use the large production parameters instead of desk scale (slow).
    #[arg(long)]
    pub full_scale: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Simulate a stuck chain and fit (J, h) two ways from its samples.
    StuckSampling,
    /// Estimation error of both fits as the sample budget grows.
    LearningError,
    /// Stationarity defect vs system size for the expansion families.
    EtaScaling,
    /// Full likelihood and conditional-likelihood surfaces on a grid.
    LossLandscapes,
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Model { action } => match action {
            ModelAction::Gen(args) => commands::model_gen(&args),
            ModelAction::Show { model } => commands::model_show(&model),
        },
        Command::Sample { action } => match action {
            SampleAction::Glauber(args) => commands::sample_chain(ChainChoice::Glauber, &args),
            SampleAction::Metropolis(args) => {
                commands::sample_chain(ChainChoice::Metropolis, &args)
            }
            SampleAction::ExactCw(args) => commands::sample_exact_cw(&args),
        },
        Command::Metastability { action } => match action {
            MetastabilityAction::Weak(args) => commands::defect(false, &args),
            MetastabilityAction::Strong(args) => commands::defect(true, &args),
            MetastabilityAction::Conductance(args) => commands::conductance(&args),
            MetastabilityAction::Gap(args) => commands::gap(&args),
        },
        Command::Cw(args) => {
            let common = commands::CwCommon { n: args.n, j: args.j, h: args.h };
            match args.action {
                CwAction::FreeEnergy { out, force } => {
                    commands::cw_free_energy(&common, out.as_deref(), force)
                }
                CwAction::M0 { out, force } => commands::cw_m0(&common, out.as_deref(), force),
                CwAction::EtaScan { family, min_n, out, force } => {
                    commands::cw_eta_scan(&common, family, min_n, out.as_deref(), force)
                }
            }
        }
        Command::Learn { action } => match action {
            LearnAction::Fit(args) => commands::learn_fit(&args),
            LearnAction::Structure(args) => commands::learn_structure(&args),
            LearnAction::Fields(args) => commands::learn_fields(&args),
            LearnAction::GridMle(args) => commands::learn_grid(true, &args),
            LearnAction::GridPl(args) => commands::learn_grid(false, &args),
        },
        Command::Verify(args) => commands::verify(&args),
        Command::Experiment(args) => experiments::run(&args),
    }
}

/// Restore the default SIGPIPE disposition so that piping into `head` and
/// friends terminates the process quietly instead of panicking on a closed
/// stdout (the Rust runtime ignores SIGPIPE by default).
fn reset_sigpipe() {
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(err) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: --threads: {err}");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(2)
        }
    }
}
