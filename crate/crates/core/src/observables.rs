//! Adiabatic invariant, its autocorrelation, and the perturbation parameter.
//!
//! Reduced units follow [`crate::dynamics`]: `L = v⊥²/β` and
//! `dL/dt = 2 v⊥·E⊥/β`, with `E⊥` in acceleration units.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, ForceField, IntegratorConfig, Thermostat, TrajectoryRecord};
use crate::ocp_model::{minimum_image, ParticleSystem};
use crate::rng::{self, STREAM_BOOTSTRAP, STREAM_DIVERGENCE};
use crate::stats;
use crate::vec3;
use crate::{Error, Result};

/// Correlation level defining the decorrelation time.
pub const DECORRELATION_LEVEL: f64 = 1.0 / std::f64::consts::E;
/// Bootstrap resamples used for correlation standard errors.
pub const BOOTSTRAP_SAMPLES: usize = 200;

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("beta must be positive, got {beta}")))
    }
}

/// Zeroth-order adiabatic invariant `v⊥²/β`.
pub fn angular_momentum_l(vperp: [f64; 2], beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok((vperp[0] * vperp[0] + vperp[1] * vperp[1]) / beta)
}

/// Its time derivative along the motion, `2 v⊥·E⊥/β`.
pub fn l_dot(vperp: [f64; 2], eperp: [f64; 2], beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(2.0 * (vperp[0] * eperp[0] + vperp[1] * eperp[1]) / beta)
}

/// Normalized time autocorrelation of `L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub lags: Vec<f64>,
    /// `C_L(t)/σ²_L`.
    pub normalized_correlation: Vec<f64>,
    /// Bootstrap standard error of each normalized value (particles resampled).
    pub stderr: Vec<f64>,
    pub sigma2_l: f64,
    pub sigma2_ldot: Option<f64>,
    pub epsilon_measured: Option<f64>,
    pub decorrelation_time: Option<f64>,
    pub gyroperiods_to_decorrelate: Option<f64>,
}

/// Per-particle lag sums about a common mean, enough to rebuild the
/// correlation of any particle subset.
struct LagSums {
    /// `Σ_t x_t x_{t+k}` per particle and lag.
    prod: Vec<Vec<f64>>,
    /// `Σ_t x_t` over the first `T-k` times.
    head: Vec<Vec<f64>>,
    /// `Σ_t x_{t+k}` over the last `T-k` times.
    tail: Vec<Vec<f64>>,
    /// Per-particle sum of `x`.
    total: Vec<f64>,
    len: usize,
}

impl LagSums {
    fn new(series: &[Vec<f64>], mean: f64, max_lag: usize) -> Self {
        let len = series[0].len();
        let mut s = LagSums { prod: vec![], head: vec![], tail: vec![], total: vec![], len };
        for p in series {
            let x: Vec<f64> = p.iter().map(|v| v - mean).collect();
            let total: f64 = x.iter().sum();
            let mut prod = Vec::with_capacity(max_lag + 1);
            let mut head = Vec::with_capacity(max_lag + 1);
            let mut tail = Vec::with_capacity(max_lag + 1);
            let (mut h, mut t) = (total, total);
            for k in 0..=max_lag {
                if k > 0 {
                    h -= x[len - k];
                    t -= x[k - 1];
                }
                prod.push(x[..len - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum());
                head.push(h);
                tail.push(t);
            }
            s.prod.push(prod);
            s.head.push(head);
            s.tail.push(tail);
            s.total.push(total);
        }
        s
    }

    /// Autocovariance at every lag for particles with multiplicities `w`.
    fn autocovariance(&self, w: &[f64]) -> Vec<f64> {
        let weight: f64 = w.iter().sum();
        let delta = w.iter().zip(&self.total).map(|(a, b)| a * b).sum::<f64>() / (weight * self.len as f64);
        (0..self.prod[0].len())
            .map(|k| {
                let n = (self.len - k) as f64;
                let mut c = 0.0;
                for (j, &wj) in w.iter().enumerate() {
                    if wj != 0.0 {
                        c += wj * (self.prod[j][k] - delta * (self.head[j][k] + self.tail[j][k]) + delta * delta * n);
                    }
                }
                c / (weight * n)
            })
            .collect()
    }
}

/// Autocorrelation of per-particle series sampled every `sample_dt`, pooled
/// over time origins and particles, up to `max_lag` (reduced time).
///
/// The mean is the grand mean; the normalization is the lag-0 value.
/// `seed` drives the particle bootstrap.
pub fn autocorrelation(series: &[Vec<f64>], sample_dt: f64, max_lag: f64, seed: u64) -> Result<CorrelationResult> {
    let len = series.first().map_or(0, Vec::len);
    if len < 2 || series.iter().any(|s| s.len() != len) {
        return Err(Error::Input("need equally long series with at least two samples".into()));
    }
    if !(sample_dt > 0.0) || !(max_lag >= 0.0) {
        return Err(Error::Input(format!("bad sampling step {sample_dt} or lag {max_lag}")));
    }
    let span = (len - 1) as f64 * sample_dt;
    if max_lag > 0.5 * span * (1.0 + 1e-12) {
        return Err(Error::Input(format!("max lag {max_lag} exceeds half the series span {span}")));
    }
    let k_max = (max_lag / sample_dt + 1e-9).floor() as usize;
    let mean = series.iter().flatten().sum::<f64>() / (len * series.len()) as f64;
    let sums = LagSums::new(series, mean, k_max);
    let ones = vec![1.0; series.len()];
    let cov = sums.autocovariance(&ones);
    let sigma2 = cov[0];
    if !(sigma2 > 0.0) {
        return Err(Error::ZeroVariance("L has zero variance".into()));
    }
    let normalized: Vec<f64> = cov.iter().map(|c| c / sigma2).collect();

    let mut r = rng::stream_rng(seed, STREAM_BOOTSTRAP);
    let np = series.len();
    let mut acc = vec![(0.0, 0.0); k_max + 1];
    for _ in 0..BOOTSTRAP_SAMPLES {
        let mut w = vec![0.0; np];
        for _ in 0..np {
            w[r.random_range(0..np)] += 1.0;
        }
        let c = sums.autocovariance(&w);
        for (a, ck) in acc.iter_mut().zip(&c) {
            let v = if c[0] > 0.0 { ck / c[0] } else { 0.0 };
            a.0 += v;
            a.1 += v * v;
        }
    }
    let b = BOOTSTRAP_SAMPLES as f64;
    let stderr = acc.iter().map(|(s, s2)| (s2 / b - (s / b).powi(2)).max(0.0).sqrt()).collect();

    Ok(CorrelationResult {
        lags: (0..=k_max).map(|k| k as f64 * sample_dt).collect(),
        normalized_correlation: normalized,
        stderr,
        sigma2_l: sigma2,
        sigma2_ldot: None,
        epsilon_measured: None,
        decorrelation_time: None,
        gyroperiods_to_decorrelate: None,
    })
}

/// Mean of `(x_{t+k} - x_t)²` over origins and particles.
pub fn mean_square_increment(series: &[Vec<f64>], lag: usize) -> f64 {
    let mut s = 0.0;
    let mut n = 0usize;
    for p in series {
        for t in 0..p.len().saturating_sub(lag) {
            s += (p[t + lag] - p[t]).powi(2);
            n += 1;
        }
    }
    s / n as f64
}

/// Average of the head- and tail-window variances about the grand mean, the
/// normalization for which `C(k) = σ²_k - ½⟨(x_{t+k} - x_t)²⟩` holds exactly.
pub fn windowed_variance(series: &[Vec<f64>], lag: usize) -> f64 {
    let len = series[0].len();
    let mean = series.iter().flatten().sum::<f64>() / (len * series.len()) as f64;
    let mut s = 0.0;
    for p in series {
        for t in 0..len - lag {
            s += 0.5 * ((p[t] - mean).powi(2) + (p[t + lag] - mean).powi(2));
        }
    }
    s / ((len - lag) * series.len()) as f64
}

/// Both forms of the perturbation parameter and the variances behind them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonEstimate {
    pub sigma2_l: f64,
    pub sigma2_ldot: f64,
    /// `σ_{L̇} / (β σ_L)`.
    pub epsilon_eq6: f64,
    /// `(2/β) σ_{v⊥·E⊥} / σ_{v⊥²}`.
    pub epsilon_eq8: f64,
}

/// Perturbation parameter from pooled samples of `v⊥` and `E⊥`.
pub fn epsilon_from_samples(vperp: &[[f64; 2]], eperp: &[[f64; 2]], beta: f64) -> Result<EpsilonEstimate> {
    check_beta(beta)?;
    if vperp.len() != eperp.len() || vperp.is_empty() {
        return Err(Error::Input("need equally many velocity and field samples".into()));
    }
    let l: Vec<f64> = vperp.iter().map(|v| (v[0] * v[0] + v[1] * v[1]) / beta).collect();
    let ld: Vec<f64> = vperp.iter().zip(eperp).map(|(v, e)| 2.0 * (v[0] * e[0] + v[1] * e[1]) / beta).collect();
    let v2: Vec<f64> = vperp.iter().map(|v| v[0] * v[0] + v[1] * v[1]).collect();
    let ve: Vec<f64> = vperp.iter().zip(eperp).map(|(v, e)| v[0] * e[0] + v[1] * e[1]).collect();
    let (sigma2_l, sigma2_ldot) = (stats::variance(&l), stats::variance(&ld));
    let sigma2_v2 = stats::variance(&v2);
    if !(sigma2_l > 0.0) || !(sigma2_v2 > 0.0) {
        return Err(Error::ZeroVariance("L has zero variance".into()));
    }
    Ok(EpsilonEstimate {
        sigma2_l,
        sigma2_ldot,
        epsilon_eq6: sigma2_ldot.sqrt() / (beta * sigma2_l.sqrt()),
        epsilon_eq8: 2.0 / beta * stats::std_dev(&ve) / sigma2_v2.sqrt(),
    })
}

/// Independent isotropic samples: `v⊥` from a unit Maxwellian and `E⊥` the
/// transverse part of a Gaussian field with per-component deviation `field_sigma`.
pub fn synthetic_isotropic(n: usize, field_sigma: f64, seed: u64) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    let mut r = rng::stream_rng(seed, rng::STREAM_SYNTHETIC);
    let mut draw = || -> f64 { r.sample(rand_distr::StandardNormal) };
    let mut v = Vec::with_capacity(n);
    let mut e = Vec::with_capacity(n);
    for _ in 0..n {
        v.push([draw(), draw()]);
        e.push([field_sigma * draw(), field_sigma * draw()]);
    }
    (v, e)
}

/// Minimum number of records for [`epsilon_measured`].
pub const MIN_RECORDS: usize = 100;

/// Perturbation parameter measured on a trajectory, pooled over particles and times.
pub fn epsilon_measured(traj: &TrajectoryRecord) -> Result<EpsilonEstimate> {
    if traj.len() < MIN_RECORDS {
        return Err(Error::Input(format!("need at least {MIN_RECORDS} records, got {}", traj.len())));
    }
    let v: Vec<[f64; 2]> = traj.vperp.iter().flatten().copied().collect();
    let e: Vec<[f64; 2]> = traj.eperp.iter().flatten().copied().collect();
    epsilon_from_samples(&v, &e, traj.meta.beta)
}

/// Per-particle series of `L` from a trajectory.
pub fn l_series(traj: &TrajectoryRecord) -> Result<Vec<Vec<f64>>> {
    check_beta(traj.meta.beta)?;
    let beta = traj.meta.beta;
    Ok(traj.per_particle(|v, _| (v[0] * v[0] + v[1] * v[1]) / beta))
}

/// Per-particle series of `dL/dt` from a trajectory.
pub fn l_dot_series(traj: &TrajectoryRecord) -> Result<Vec<Vec<f64>>> {
    check_beta(traj.meta.beta)?;
    let beta = traj.meta.beta;
    Ok(traj.per_particle(|v, e| 2.0 * (v[0] * e[0] + v[1] * e[1]) / beta))
}

/// First lag where the normalized correlation falls below `1/e`, linearly
/// interpolated; `None` when it never does within the computed lags.
pub fn decorrelation_time(corr: &CorrelationResult) -> Option<f64> {
    let c = &corr.normalized_correlation;
    (1..c.len()).find(|&k| c[k] < DECORRELATION_LEVEL).map(|k| {
        let (t0, t1) = (corr.lags[k - 1], corr.lags[k]);
        t0 + (c[k - 1] - DECORRELATION_LEVEL) / (c[k - 1] - c[k]) * (t1 - t0)
    })
}

/// Fill in the decorrelation time and its value in gyroperiods `2π/β`.
pub fn with_decorrelation(mut corr: CorrelationResult, beta: f64) -> CorrelationResult {
    corr.decorrelation_time = decorrelation_time(&corr);
    corr.gyroperiods_to_decorrelate = corr.decorrelation_time.map(|t| t * beta / (2.0 * std::f64::consts::PI));
    corr
}

/// Perturbation parameter and `L` autocorrelation of a trajectory, lags up to
/// `max_lag` (reduced time), with the decorrelation time filled in.
pub fn analyze_trajectory(
    traj: &TrajectoryRecord,
    max_lag: f64,
    seed: u64,
) -> Result<(EpsilonEstimate, CorrelationResult)> {
    let eps = epsilon_measured(traj)?;
    let sample_dt = traj.meta.dt * traj.meta.record_stride as f64;
    let mut corr = autocorrelation(&l_series(traj)?, sample_dt, max_lag, seed)?;
    corr.sigma2_ldot = Some(eps.sigma2_ldot);
    corr.epsilon_measured = Some(eps.epsilon_eq6);
    Ok((eps, with_decorrelation(corr, traj.meta.beta)))
}

/// Right-hand side of the short-time bound, `1 - ½ ε² (β t)²`.
pub fn short_time_bound(epsilon: f64, beta: f64, t: f64) -> f64 {
    1.0 - 0.5 * epsilon * epsilon * (beta * t).powi(2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub lag: f64,
    pub measured: f64,
    pub bound: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub pass: bool,
    pub lags_checked: usize,
    pub first_violation: Option<BoundViolation>,
    /// Smallest `measured - bound + tolerance` over all lags.
    pub min_margin: f64,
}

/// Check `C_L(t)/σ²_L ≥ 1 - ½ε²(βt)² - 3·stderr(t)` at every lag.
pub fn shorttime_bound_check(corr: &CorrelationResult, epsilon: f64, beta: f64) -> BoundReport {
    bound_check(corr, epsilon, beta, |k| 3.0 * corr.stderr.get(k).copied().unwrap_or(0.0))
}

/// Same check with a fixed tolerance in place of the bootstrap errors.
pub fn shorttime_bound_check_abs(corr: &CorrelationResult, epsilon: f64, beta: f64, tolerance: f64) -> BoundReport {
    bound_check(corr, epsilon, beta, |_| tolerance)
}

fn bound_check(corr: &CorrelationResult, epsilon: f64, beta: f64, tolerance: impl Fn(usize) -> f64) -> BoundReport {
    let mut first = None;
    let mut min_margin = f64::INFINITY;
    for (k, (&t, &c)) in corr.lags.iter().zip(&corr.normalized_correlation).enumerate() {
        let bound = short_time_bound(epsilon, beta, t);
        let tol = tolerance(k);
        let margin = c - bound + tol;
        min_margin = min_margin.min(margin);
        if margin < 0.0 && first.is_none() {
            first = Some(BoundViolation { lag: t, measured: c, bound, tolerance: tol });
        }
    }
    BoundReport { pass: first.is_none(), lags_checked: corr.lags.len(), first_violation: first, min_margin }
}

/// Contents of `epsilon.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonReport {
    #[serde(rename = "sigma2_L")]
    pub sigma2_l: f64,
    #[serde(rename = "sigma2_Ldot")]
    pub sigma2_ldot: f64,
    pub epsilon_eq6: f64,
    pub epsilon_eq8: f64,
    pub decorrelation_time: Option<f64>,
    pub gyroperiods: Option<f64>,
    /// Correlation level defining decorrelation (an analysis choice).
    pub decorrelation_level: f64,
    /// Gyroperiods below which motion counts as disordered (an analysis choice).
    pub order_threshold_gyroperiods: f64,
}

impl EpsilonReport {
    pub fn new(eps: &EpsilonEstimate, corr: &CorrelationResult) -> Self {
        EpsilonReport {
            sigma2_l: eps.sigma2_l,
            sigma2_ldot: eps.sigma2_ldot,
            epsilon_eq6: eps.epsilon_eq6,
            epsilon_eq8: eps.epsilon_eq8,
            decorrelation_time: corr.decorrelation_time,
            gyroperiods: corr.gyroperiods_to_decorrelate,
            decorrelation_level: DECORRELATION_LEVEL,
            order_threshold_gyroperiods: 1.0,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

/// Write `correlation.csv` with columns `lag,normalized_C,bound_rhs`.
pub fn write_correlation_csv<W: Write>(corr: &CorrelationResult, epsilon: f64, beta: f64, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["lag", "normalized_C", "bound_rhs"])?;
    for (&t, &c) in corr.lags.iter().zip(&corr.normalized_correlation) {
        out.write_record(&[t.to_string(), c.to_string(), short_time_bound(epsilon, beta, t).to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Result of the twin-trajectory separation measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceResult {
    /// Mean exponential separation rate in units of `ω_p`.
    pub rate: f64,
    /// Steps between renormalizations actually used at the end.
    pub renormalize_every: usize,
    pub segments: usize,
}

/// Largest separation, as a fraction of the box, tolerated between renormalizations.
const SATURATION_FRACTION: f64 = 1e-3;

fn separation(a: &ParticleSystem, b: &ParticleSystem) -> f64 {
    let l = a.box_length();
    let mut s = 0.0;
    for i in 0..a.len() {
        let (pa, pb) = (a.positions()[i], b.positions()[i]);
        for k in 0..3 {
            s += minimum_image(pb[k] - pa[k], l).powi(2);
        }
        s += vec3::norm2(vec3::sub(b.velocities()[i], a.velocities()[i]));
    }
    s.sqrt()
}

/// Pull `b` back towards `a` so their phase-space distance becomes `target`.
fn renormalize(a: &ParticleSystem, b: &mut ParticleSystem, target: f64, current: f64) {
    let f = target / current;
    let l = a.box_length();
    for i in 0..a.len() {
        let (pa, pb) = (a.positions()[i], b.positions()[i]);
        let p = std::array::from_fn(|k| pa[k] + f * minimum_image(pb[k] - pa[k], l));
        b.set_position(i, p);
        let (va, vb) = (a.velocities()[i], b.velocities()[i]);
        b.velocities_mut()[i] = vec3::add(va, vec3::scale(vec3::sub(vb, va), f));
    }
}

/// Twin-trajectory estimate of the largest separation rate.
///
/// A copy of `sys` is displaced by `delta0` in a random phase-space direction
/// (seeded from the system seed); both copies run `cfg.steps` steps with the
/// thermostat off and are brought back to distance `delta0` every
/// `renormalize_every` steps. Intervals whose separation grows past a small
/// fraction of the box are halved and retried.
pub fn trajectory_divergence<F: ForceField + ?Sized>(
    sys: &ParticleSystem,
    cfg: &IntegratorConfig,
    delta0: f64,
    renormalize_every: usize,
    force: &mut F,
) -> Result<DivergenceResult> {
    if !(0.0..=1e-6).contains(&delta0) {
        return Err(Error::Domain(format!("delta0 must lie in [0, 1e-6], got {delta0}")));
    }
    if renormalize_every == 0 {
        return Err(Error::Config("renormalization interval must be positive".into()));
    }
    let base = IntegratorConfig { thermostat: Thermostat::Off, record_stride: 1, ..*cfg };
    let mut a = sys.clone();
    let mut b = sys.clone();
    if delta0 > 0.0 {
        let mut r = rng::stream_rng(sys.seed(), STREAM_DIVERGENCE);
        let dir: Vec<f64> = (0..6 * sys.len()).map(|_| r.sample(rand_distr::StandardNormal)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        for i in 0..sys.len() {
            let d: [f64; 6] = std::array::from_fn(|k| delta0 * dir[6 * i + k] / norm);
            b.displace(i, [d[0], d[1], d[2]]);
            b.velocities_mut()[i] = vec3::add(b.velocities()[i], [d[3], d[4], d[5]]);
        }
    }
    let saturation = SATURATION_FRACTION * sys.box_length();
    let mut interval = renormalize_every.min(cfg.steps.max(1));
    let (mut done, mut log_sum, mut segments) = (0usize, 0.0, 0usize);
    while done < cfg.steps {
        let n = interval.min(cfg.steps - done);
        let seg = IntegratorConfig { steps: n, ..base };
        let (mut a1, mut b1) = (a.clone(), b.clone());
        integrate(&mut a1, &seg, force, |_| {})?;
        integrate(&mut b1, &seg, force, |_| {})?;
        let d = separation(&a1, &b1);
        if d > saturation && n > 1 {
            interval = (n / 2).max(1);
            continue;
        }
        if delta0 > 0.0 && d > 0.0 {
            log_sum += (d / delta0).ln();
            renormalize(&a1, &mut b1, delta0, d);
        }
        a = a1;
        b = b1;
        done += n;
        segments += 1;
    }
    let total_time = cfg.steps as f64 * cfg.dt;
    Ok(DivergenceResult {
        rate: if total_time > 0.0 { log_sum / total_time } else { 0.0 },
        renormalize_every: interval,
        segments,
    })
}
