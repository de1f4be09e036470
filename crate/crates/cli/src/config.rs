//! Flat run configuration shared by flags and JSON config files.
//!
//! Keys are the flag names without the leading dashes. A value given on the
//! command line wins over the config file, which wins over the module default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl LogLevel {
    pub fn filter(self) -> log::LevelFilter {
        match self {
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
            LogLevel::Trace => log::LevelFilter::Trace,
        }
    }
}

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_OUTPUT_DIR: &str = "ocp-chaos-out";
pub const DEFAULT_LOG_LEVEL: LogLevel = LogLevel::Warn;
pub const JOBS_ENV: &str = "OCP_CHAOS_JOBS";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Config {
    /// Subcommand the resolved file was written by; ignored on input.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", alias = "output_dir")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", alias = "log_level")]
    pub log_level: Option<LogLevel>,

    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    pub field_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub temperature: Option<String>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub particles: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", alias = "dump_configs")]
    pub dump_configs: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", alias = "max_lag")]
    pub max_lag: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", alias = "metropolis_sweeps")]
    pub metropolis_sweeps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", alias = "equilibration_steps")]
    pub equilibration_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", alias = "divergence_steps")]
    pub divergence_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", alias = "min_gyroperiods")]
    pub min_gyroperiods: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none", alias = "b_min")]
    pub b_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", alias = "b_max")]
    pub b_max: Option<f64>,
}

macro_rules! overlay {
    ($hi:ident, $lo:ident; $($f:ident),* $(,)?) => {
        Config { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("--config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("--config {}: {e}", path.display())))
    }

    /// Keys set in `self` win; missing ones come from `lower`.
    pub fn over(self, lower: Config) -> Config {
        let hi = self;
        let lo = lower;
        overlay!(hi, lo;
            command, seed, output_dir, jobs, log_level, field_b, n, temperature, gamma, beta, betas,
            particles, sweeps, dump_configs, steps, dt, max_lag, metropolis_sweeps,
            equilibration_steps, divergence_steps, min_gyroperiods, records, b_min, b_max)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    pub fn log_level(&self) -> LogLevel {
        self.log_level.unwrap_or(DEFAULT_LOG_LEVEL)
    }

    /// `--jobs`, then the config file, then `OCP_CHAOS_JOBS`.
    pub fn resolve_jobs(&mut self) -> Result<(), CliError> {
        if self.jobs.is_none() {
            if let Ok(v) = std::env::var(JOBS_ENV) {
                let j = v
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Validation(format!("{JOBS_ENV} must be a positive integer, got {v:?}")))?;
                self.jobs = Some(j);
            }
        }
        if self.jobs == Some(0) {
            return Err(CliError::Validation("--jobs must be positive".into()));
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        std::fs::write(dir.join("config.json"), text).map_err(CliError::io)
    }
}

/// Value of a required key, or a validation error naming its flag.
pub fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T, CliError> {
    v.clone().ok_or_else(|| CliError::Validation(format!("--{flag} is required (flag or config key)")))
}

pub fn positive(v: f64, flag: &str) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Validation(format!("--{flag} must be positive, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let flags = Config { gamma: Some(0.5), ..Default::default() };
        let file = Config { gamma: Some(0.2), particles: Some(64), ..Default::default() };
        let c = flags.over(file);
        assert_eq!(c.gamma, Some(0.5));
        assert_eq!(c.particles, Some(64));
        assert_eq!(c.seed(), DEFAULT_SEED);
    }

    #[test]
    fn keys_match_flags() {
        let c: Config =
            serde_json::from_str(r#"{"B": 1.0, "output-dir": "x", "max_lag": 2.0, "betas": [0.5, 1.0]}"#).unwrap();
        assert_eq!(c.field_b, Some(1.0));
        assert_eq!(c.output_dir, Some(PathBuf::from("x")));
        assert_eq!(c.max_lag, Some(2.0));
        assert!(serde_json::from_str::<Config>(r#"{"bogus": 1}"#).is_err());
    }
}
