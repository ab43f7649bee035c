//! `hkc`: command-line front end for generating, simulating and analysing
//! HKC truncations.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hkc_core::HkcError;

#[derive(Debug, Parser)]
#[command(name = "hkc", version, about = "HKC hierarchy toolkit for rotating Boussinesq convection")]
pub struct Cli {
    /// Omit the `# ...` banner line from CSV outputs.
    #[arg(long, global = true)]
    pub no_banner: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the spec of HKC-M as JSON and report the consistency criteria.
    Generate {
        #[arg(short = 'M', long = "level")]
        level: u32,
        /// Output path; stdout when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Integrate one trajectory from a perturbed uniform state.
    Simulate(SimulateArgs),
    /// Finite-time Nusselt series and convergence verdict of a trajectory.
    Nusselt {
        traj: PathBuf,
        #[arg(long, default_value_t = std::f64::consts::FRAC_1_SQRT_2)]
        k1: f64,
        #[arg(long, default_value_t = 0.02)]
        threshold: f64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the extend-until-converged protocol over a parameter grid.
    Sweep(SweepArgs),
    /// Origin stability atlas, unstable dimension and attractor-dimension bound.
    Stability {
        #[command(flatten)]
        physics: PhysicsArgs,
        #[arg(long, default_value_t = 50)]
        max_shell: u32,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct physical fields from a trajectory at one time.
    Field {
        traj: PathBuf,
        #[arg(long)]
        time: f64,
        /// Grid as `n1xn3`.
        #[arg(long, default_value = "64x33")]
        grid: String,
        #[arg(long, default_value_t = std::f64::consts::FRAC_1_SQRT_2)]
        k1: f64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    TroposphereEquator,
    TropospherePole,
}

/// Physical parameters; explicit flags override a preset, which overrides defaults.
#[derive(Debug, Clone, Args)]
pub struct PhysicsArgs {
    /// Rayleigh number [default: 189].
    #[arg(short = 'R', long = "R")]
    pub rayleigh: Option<f64>,
    /// Rotation number [default: 0].
    #[arg(short = 'S', long = "S")]
    pub rotation: Option<f64>,
    /// Prandtl number [default: 10].
    #[arg(short = 'P', long = "P")]
    pub prandtl: Option<f64>,
    /// Aspect ratio [default: 1/sqrt(2)].
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

#[derive(Debug, Clone, Args)]
pub struct IntegratorArgs {
    #[arg(long, default_value_t = 1e-10)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub abs_tol: f64,
    #[arg(long, default_value_t = 0.05)]
    pub dt_max: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model spec JSON; overrides -M.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(short = 'M', long = "level", default_value_t = 1)]
    pub level: u32,
    #[command(flatten)]
    pub physics: PhysicsArgs,
    #[command(flatten)]
    pub integrator: IntegratorArgs,
    #[arg(long, default_value_t = 10.0)]
    pub t_final: f64,
    /// Store every k-th accepted step.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub replicate: u64,
    #[arg(long, default_value_t = 0.1)]
    pub amplitude: f64,
    /// Run a spec that fails the consistency criteria.
    #[arg(long)]
    pub allow_inconsistent: bool,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Rayleigh grid, e.g. `0:50:500` or `[1, 50:50:500]`.
    #[arg(long = "R")]
    pub r_values: String,
    /// Rotation grid.
    #[arg(long = "S", default_value = "0")]
    pub s_values: String,
    #[arg(short = 'M', long = "level", default_value_t = 1)]
    pub level: u32,
    #[arg(short = 'P', long = "P", default_value_t = 10.0)]
    pub prandtl: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_1_SQRT_2)]
    pub k1: f64,
    #[arg(long, default_value_t = 1)]
    pub ensemble: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub amplitude: f64,
    #[command(flatten)]
    pub integrator: IntegratorArgs,
    #[arg(long, default_value_t = 1.0)]
    pub burn_time: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub extension_time: f64,
    #[arg(long, default_value_t = 1)]
    pub min_extensions: u32,
    #[arg(long, default_value_t = 10)]
    pub max_extensions: u32,
    #[arg(long, default_value_t = 0.02)]
    pub threshold: f64,
    /// Worker threads; falls back to HKC_THREADS, then all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Run tasks one after another, appending rows as they finish.
    #[arg(long)]
    pub serial: bool,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Also write the Nusselt histogram over bins 0:0.5:10.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
}

/// Failure with its exit code.
#[derive(Debug)]
pub enum CliError {
    Io(String),
    Usage(String),
    Numerical(String),
    Criteria(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Criteria(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Usage(m) | CliError::Numerical(m) | CliError::Criteria(m) => m,
        }
    }
}

impl From<HkcError> for CliError {
    fn from(e: HkcError) -> Self {
        let msg = e.to_string();
        match e {
            HkcError::Io(_) | HkcError::Csv(_) | HkcError::Json(_) => CliError::Io(msg),
            HkcError::Inconsistent(_) => CliError::Criteria(msg),
            e if e.is_numerical() => CliError::Numerical(msg),
            _ => CliError::Usage(msg),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hkc: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
