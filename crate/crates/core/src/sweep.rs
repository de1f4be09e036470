//! Sweep over magnetization at fixed coupling and location of the
//! order-to-chaos threshold.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    equilibrate_with, recommended_dt, run_nve_with, EwaldForce, IntegratorConfig, Thermostat,
};
use crate::observables::{analyze_trajectory, trajectory_divergence, DECORRELATION_LEVEL};
use crate::ocp_model::{EwaldConfig, ParticleSystem};
use crate::sampler::{metropolis_positions, sample_velocities};
use crate::stats;
use crate::{Error, Result};

/// `β` at which the predicted perturbation parameter equals one.
pub fn conjectured_threshold() -> f64 {
    (2.0f64 / 3.0).sqrt()
}

/// Predicted perturbation parameter `sqrt(2/3)/β`.
pub fn epsilon_predicted(beta: f64) -> f64 {
    conjectured_threshold() / beta
}

/// `n` values spaced evenly in `ln β` over `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub gamma: f64,
    pub betas: Vec<f64>,
    pub particles: usize,
    pub seed: u64,
    /// Concurrent sweep points; `None` uses all cores.
    pub jobs: Option<usize>,
    /// Time step; `None` picks [`recommended_dt`] per point.
    pub dt: Option<f64>,
    /// Minimum production steps per point.
    pub steps: usize,
    /// Production length covers at least this many gyroperiods of the smallest `β`.
    pub min_gyroperiods: f64,
    /// Upper bound on stored records per run; sets the record stride.
    pub max_records: usize,
    pub metropolis_sweeps: usize,
    pub equilibration_steps: usize,
    pub thermostat_every: usize,
    /// Steps of the twin-trajectory run; 0 skips it.
    pub divergence_steps: usize,
    pub divergence_delta0: f64,
    pub renormalize_every: usize,
    pub ewald: Option<EwaldConfig>,
}

impl SweepConfig {
    pub fn new(gamma: f64, betas: Vec<f64>, particles: usize, seed: u64) -> Self {
        SweepConfig {
            gamma,
            betas,
            particles,
            seed,
            jobs: None,
            dt: None,
            steps: 10_000,
            min_gyroperiods: 2.0,
            max_records: 4000,
            metropolis_sweeps: 200,
            equilibration_steps: 1000,
            thermostat_every: 10,
            divergence_steps: 2000,
            divergence_delta0: 1e-8,
            renormalize_every: 50,
            ewald: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::Domain(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.betas.is_empty() || self.betas.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(Error::Domain("betas must be a non-empty list of positive values".into()));
        }
        if self.steps == 0 || self.max_records < 2 || self.thermostat_every == 0 {
            return Err(Error::Config("steps, max_records and thermostat interval must be positive".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be positive".into()));
        }
        Ok(())
    }

    fn dt_for(&self, beta: f64) -> f64 {
        self.dt.unwrap_or_else(|| recommended_dt(beta, self.gamma))
    }

    /// Production time shared by all points: `steps` at the smallest step, or
    /// `min_gyroperiods` at the smallest `β`, whichever is longer. A common span
    /// keeps lower bounds from undecorrelated points comparable across `β`.
    pub fn span(&self) -> f64 {
        let dt_min = self.betas.iter().map(|&b| self.dt_for(b)).fold(f64::INFINITY, f64::min);
        let beta_min = self.betas.iter().copied().fold(f64::INFINITY, f64::min);
        (self.steps as f64 * dt_min).max(self.min_gyroperiods * 2.0 * PI / beta_min)
    }

    /// Integrator settings for one point: time step, production steps and stride.
    pub fn point_config(&self, beta: f64) -> IntegratorConfig {
        let dt = self.dt_for(beta);
        let raw = (self.span() / dt).ceil() as usize;
        let stride = raw.div_ceil(self.max_records - 1).max(1);
        IntegratorConfig {
            dt,
            steps: raw.div_ceil(stride) * stride,
            record_stride: stride,
            beta,
            gamma: self.gamma,
            thermostat: Thermostat::Off,
            ewald: self.ewald,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub gamma: f64,
    #[serde(rename = "N")]
    pub particles: usize,
    pub epsilon_predicted: f64,
    pub epsilon_measured: f64,
    /// `σ_{E⊥}/β` from the recorded fields, the value the sum-rule chain predicts
    /// for independent velocities and fields.
    pub epsilon_from_field: f64,
    pub decorrelation_time: Option<f64>,
    /// Gyroperiods to decorrelate; when not reached, the lower bound set by the longest lag.
    pub decorrelation_gyroperiods: f64,
    pub decorrelation_reached: bool,
    pub divergence_rate: Option<f64>,
    pub energy_drift: f64,
    pub energy_drift_flag: bool,
    pub dt: f64,
    pub steps: usize,
}

impl SweepRow {
    pub fn is_ordered(&self) -> bool {
        self.decorrelation_gyroperiods >= 1.0
    }
}

/// Value reported when no crossing is found.
pub const NOT_BRACKETED: &str = "not bracketed";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threshold {
    Bracketed {
        beta: f64,
        lower: f64,
        upper: f64,
        /// The upper row never decorrelated; its value is a lower bound.
        upper_is_bound: bool,
    },
    NotBracketed(String),
}

impl Threshold {
    pub fn not_bracketed() -> Self {
        Threshold::NotBracketed(NOT_BRACKETED.into())
    }

    pub fn beta(&self) -> Option<f64> {
        match self {
            Threshold::Bracketed { beta, .. } => Some(*beta),
            Threshold::NotBracketed(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub located_threshold_beta: Threshold,
    /// Decorrelation gyroperiods nondecreasing in `β`.
    pub monotone: bool,
    pub diagnostics: Vec<String>,
}

/// Row of the sweep at one `β`, starting from the shared initial state.
pub fn run_point(cfg: &SweepConfig, start: &ParticleSystem, beta: f64) -> Result<SweepRow> {
    let prod = cfg.point_config(beta);
    let mut force = EwaldForce::new(&prod, cfg.particles)?;
    let mut sys = start.clone();
    if cfg.equilibration_steps > 0 {
        let eq = IntegratorConfig {
            steps: cfg.equilibration_steps,
            record_stride: 1,
            thermostat: Thermostat::VelocityRescale { every: cfg.thermostat_every },
            ..prod
        };
        sys = equilibrate_with(&sys, &eq, &mut force)?.0;
    }
    let (after, traj) = run_nve_with(&sys, &prod, &mut force)?;
    let span = prod.steps as f64 * prod.dt;
    let (eps, corr) = analyze_trajectory(&traj, 0.5 * span, cfg.seed)?;
    let max_lag = corr.lags.last().copied().unwrap_or(0.0);
    let e_perp: Vec<[f64; 2]> = traj.eperp.iter().flatten().copied().collect();
    let var_e: f64 = (0..2).map(|k| stats::variance(&e_perp.iter().map(|e| e[k]).collect::<Vec<_>>())).sum();
    let divergence_rate = if cfg.divergence_steps > 0 {
        let div = IntegratorConfig { steps: cfg.divergence_steps, record_stride: 1, ..prod };
        Some(trajectory_divergence(&after, &div, cfg.divergence_delta0, cfg.renormalize_every, &mut force)?.rate)
    } else {
        None
    };
    Ok(SweepRow {
        beta,
        gamma: cfg.gamma,
        particles: cfg.particles,
        epsilon_predicted: epsilon_predicted(beta),
        epsilon_measured: eps.epsilon_eq6,
        epsilon_from_field: var_e.sqrt() / beta,
        decorrelation_time: corr.decorrelation_time,
        decorrelation_gyroperiods: corr
            .gyroperiods_to_decorrelate
            .unwrap_or(max_lag * beta / (2.0 * PI)),
        decorrelation_reached: corr.decorrelation_time.is_some(),
        divergence_rate,
        energy_drift: traj.meta.energy_drift,
        energy_drift_flag: traj.meta.energy_drift_flag,
        dt: prod.dt,
        steps: prod.steps,
    })
}

/// Run every point: shared Metropolis positions and Maxwellian velocities from
/// `seed`, thermostatted equilibration, an energy-conserving run, analysis and
/// a twin-trajectory divergence estimate.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let mut betas = cfg.betas.clone();
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    let mut start = metropolis_positions(cfg.gamma, cfg.particles, cfg.metropolis_sweeps, cfg.seed)?;
    start.set_velocities(sample_velocities(cfg.particles, cfg.seed)?)?;
    let work = || betas.par_iter().map(|&b| run_point(cfg, &start, b)).collect::<Result<Vec<_>>>();
    let rows = match cfg.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    Ok(assemble(rows))
}

/// Attach the threshold and monotonicity diagnostics to finished rows.
pub fn assemble(mut rows: Vec<SweepRow>) -> SweepResult {
    rows.sort_by(|a, b| a.beta.total_cmp(&b.beta));
    let mut diagnostics = Vec::new();
    let mut monotone = true;
    let mut last: Option<&SweepRow> = None;
    for row in &rows {
        if row.energy_drift_flag {
            diagnostics.push(format!("beta {}: energy drift {:.2e} flagged", row.beta, row.energy_drift));
        }
        if let Some(prev) = last {
            // An unreached row only bounds its value from below.
            let decreasing = row.decorrelation_reached && row.decorrelation_gyroperiods < prev.decorrelation_gyroperiods;
            if decreasing {
                monotone = false;
                diagnostics.push(format!("decorrelation gyroperiods decrease between beta {} and {}", prev.beta, row.beta));
            }
        }
        last = Some(row);
    }
    SweepResult { located_threshold_beta: locate_threshold(&rows), rows, monotone, diagnostics }
}

/// First crossing of the one-gyroperiod level, interpolating `ln(gyroperiods)`
/// linearly in `β` between the bracketing rows.
pub fn locate_threshold(rows: &[SweepRow]) -> Threshold {
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.decorrelation_reached && !a.is_ordered() && b.is_ordered() {
            let (ga, gb) = (a.decorrelation_gyroperiods.max(1e-300).ln(), b.decorrelation_gyroperiods.ln());
            let f = if gb > ga { -ga / (gb - ga) } else { 0.5 };
            return Threshold::Bracketed {
                beta: a.beta + f * (b.beta - a.beta),
                lower: a.beta,
                upper: b.beta,
                upper_is_bound: !b.decorrelation_reached,
            };
        }
    }
    Threshold::not_bracketed()
}

/// Header of `sweep.csv`.
pub const SWEEP_HEADER: [&str; 14] = [
    "beta",
    "gamma",
    "N",
    "epsilon_predicted",
    "epsilon_measured",
    "epsilon_from_field",
    "decorrelation_time",
    "decorrelation_gyroperiods",
    "decorrelation_reached",
    "divergence_rate",
    "energy_drift",
    "energy_drift_flag",
    "dt",
    "steps",
];

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(SWEEP_HEADER)?;
        for r in &self.rows {
            out.write_record(&[
                r.beta.to_string(),
                r.gamma.to_string(),
                r.particles.to_string(),
                r.epsilon_predicted.to_string(),
                r.epsilon_measured.to_string(),
                r.epsilon_from_field.to_string(),
                opt(r.decorrelation_time),
                r.decorrelation_gyroperiods.to_string(),
                r.decorrelation_reached.to_string(),
                opt(r.divergence_rate),
                r.energy_drift.to_string(),
                r.energy_drift_flag.to_string(),
                r.dt.to_string(),
                r.steps.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn threshold_report(&self) -> ThresholdReport {
        let beta = self.located_threshold_beta.beta();
        let (bracket, upper_is_bound) = match &self.located_threshold_beta {
            Threshold::Bracketed { lower, upper, upper_is_bound, .. } => (Some([*lower, *upper]), *upper_is_bound),
            Threshold::NotBracketed(_) => (None, false),
        };
        ThresholdReport {
            located_threshold_beta: match beta {
                Some(b) => ThresholdValue::Beta(b),
                None => ThresholdValue::NotBracketed(NOT_BRACKETED.into()),
            },
            bracket,
            upper_is_bound,
            conjectured_threshold_beta: conjectured_threshold(),
            ratio_to_conjecture: beta.map(|b| b / conjectured_threshold()),
            criterion: "decorrelation within one gyroperiod".into(),
            decorrelation_level: DECORRELATION_LEVEL,
            monotone: self.monotone,
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// Write `sweep.csv` and `threshold.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(dir.join("sweep.csv"))?))?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("threshold.json"))?);
        serde_json::to_writer_pretty(&mut f, &self.threshold_report())?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

/// Located `β*` as a bare number, or the string "not bracketed".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdValue {
    Beta(f64),
    NotBracketed(String),
}

impl ThresholdValue {
    pub fn beta(&self) -> Option<f64> {
        match self {
            ThresholdValue::Beta(b) => Some(*b),
            ThresholdValue::NotBracketed(_) => None,
        }
    }
}

/// Contents of `threshold.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub located_threshold_beta: ThresholdValue,
    pub bracket: Option<[f64; 2]>,
    pub upper_is_bound: bool,
    pub conjectured_threshold_beta: f64,
    pub ratio_to_conjecture: Option<f64>,
    pub criterion: String,
    pub decorrelation_level: f64,
    pub monotone: bool,
    pub diagnostics: Vec<String>,
}
