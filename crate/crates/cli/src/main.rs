//! `ocp-chaos`: predictions, microfield sampling, magnetized runs, threshold
//! sweeps and the density-limit figure from one seeded command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::{Config, LogLevel};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys or parameter values (exit 1).
    Validation(String),
    /// Failure while running (exit 2).
    Runtime(String),
}

impl CliError {
    fn io(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<ocp_chaos::Error> for CliError {
    fn from(e: ocp_chaos::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "run failed: {m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "ocp-chaos", version, about = "One-component plasma order-to-chaos toolkit")]
#[command(allow_negative_numbers = true)]
struct Cli {
    /// Flat JSON file with the same keys as the flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Worker threads for `sweep` (falls back to OCP_CHAOS_JOBS).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum)]
    log_level: Option<LogLevel>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form predictions for a macroscopic state.
    #[command(allow_negative_numbers = true)]
    Predict(PredictArgs),
    /// Metropolis microfield statistics and the sum-rule check.
    #[command(allow_negative_numbers = true)]
    Microfield(MicrofieldArgs),
    /// One magnetized run with autocorrelation and epsilon analysis.
    #[command(allow_negative_numbers = true)]
    Simulate(SimulateArgs),
    /// Magnetization sweep and threshold location.
    #[command(allow_negative_numbers = true)]
    Sweep(SweepArgs),
    /// Density-limit figure and residuals for machine records.
    #[command(allow_negative_numbers = true)]
    Figure(FigureArgs),
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Magnetic field [T].
    #[arg(long = "B")]
    field_b: Option<f64>,
    /// Electron density [m⁻³].
    #[arg(long)]
    n: Option<f64>,
    /// Temperature with unit suffix, e.g. "1 keV" or "1.2e7K".
    #[arg(long = "T")]
    temperature: Option<String>,
}

#[derive(Args, Debug)]
struct MicrofieldArgs {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    sweeps: Option<usize>,
    /// Also write every recorded configuration in the `ocp v1` format.
    #[arg(long)]
    dump_configs: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    /// Largest autocorrelation lag (reduced time); default half the run.
    #[arg(long)]
    max_lag: Option<f64>,
    #[arg(long)]
    metropolis_sweeps: Option<usize>,
    #[arg(long)]
    equilibration_steps: Option<usize>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    gamma: Option<f64>,
    /// Comma-separated magnetizations.
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    min_gyroperiods: Option<f64>,
    #[arg(long)]
    metropolis_sweeps: Option<usize>,
    #[arg(long)]
    equilibration_steps: Option<usize>,
    /// Twin-trajectory steps per point; 0 skips the divergence estimate.
    #[arg(long)]
    divergence_steps: Option<usize>,
}

#[derive(Args, Debug)]
struct FigureArgs {
    /// Machine records CSV; without it only the theoretical line is drawn.
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long)]
    b_min: Option<f64>,
    #[arg(long)]
    b_max: Option<f64>,
}

impl Cli {
    fn into_config(self) -> (Option<PathBuf>, Config) {
        let mut c = Config {
            seed: self.seed,
            output_dir: self.output_dir,
            jobs: self.jobs,
            log_level: self.log_level,
            ..Default::default()
        };
        let name = match self.command {
            Command::Predict(a) => {
                c.field_b = a.field_b;
                c.n = a.n;
                c.temperature = a.temperature;
                "predict"
            }
            Command::Microfield(a) => {
                c.gamma = a.gamma;
                c.particles = a.particles;
                c.sweeps = a.sweeps;
                c.dump_configs = a.dump_configs.then_some(true);
                "microfield"
            }
            Command::Simulate(a) => {
                c.gamma = a.gamma;
                c.beta = a.beta;
                c.particles = a.particles;
                c.steps = a.steps;
                c.dt = a.dt;
                c.max_lag = a.max_lag;
                c.metropolis_sweeps = a.metropolis_sweeps;
                c.equilibration_steps = a.equilibration_steps;
                "simulate"
            }
            Command::Sweep(a) => {
                c.gamma = a.gamma;
                c.betas = a.betas;
                c.particles = a.particles;
                c.steps = a.steps;
                c.dt = a.dt;
                c.min_gyroperiods = a.min_gyroperiods;
                c.metropolis_sweeps = a.metropolis_sweeps;
                c.equilibration_steps = a.equilibration_steps;
                c.divergence_steps = a.divergence_steps;
                "sweep"
            }
            Command::Figure(a) => {
                c.records = a.records;
                c.b_min = a.b_min;
                c.b_max = a.b_max;
                "figure"
            }
        };
        c.command = Some(name.into());
        (self.config, c)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (path, flags) = cli.into_config();
    let file = match path {
        Some(p) => Config::load(&p)?,
        None => Config::default(),
    };
    // the subcommand always comes from argv
    let command = flags.command.clone();
    let mut cfg = flags.over(file);
    cfg.command = command;
    cfg.resolve_jobs()?;

    let _ = env_logger::Builder::new().filter_level(cfg.log_level().filter()).try_init();
    log::info!("seed {} output {}", cfg.seed(), cfg.output_dir().display());

    commands::dispatch(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ocp-chaos: {e}");
            ExitCode::from(e.code())
        }
    }
}
