//! Gibbs sampling of the one-component plasma and microfield statistics.
//!
//! Positions are drawn by single-particle Metropolis moves with weight
//! `exp(-Γ U)`, `U` the Ewald energy in units of `e²/(4πε₀a)`. Velocities are
//! Maxwellian and independent of positions.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ocp_model::{Ewald, EwaldConfig, IncrementalEwald, ParticleSystem};
use crate::rng::{self, STREAM_METROPOLIS, STREAM_VELOCITIES};
use crate::stats;
use crate::vec3::{self, Vec3};
use crate::{Error, Result};

/// Smallest particle count accepted by the Metropolis sampler.
pub const MIN_PARTICLES: usize = 16;
/// Minimum number of blocks in block-averaged standard errors.
pub const MIN_BLOCKS: usize = 16;
/// Metropolis sweeps of a microfield run when none are given.
pub const DEFAULT_SWEEPS: usize = 2000;
/// Bins in the microfield magnitude histogram.
pub const HISTOGRAM_BINS: usize = 60;

const TARGET_ACCEPTANCE: (f64, f64) = (0.4, 0.6);
const ACCEPTANCE_WARN: (f64, f64) = (0.1, 0.9);
const TUNE_EVERY: usize = 5;
const REFRESH_EVERY: usize = 200;
/// Energy autocorrelation allowed between recorded configurations.
const RECORD_CORRELATION: f64 = 0.1;

/// Settings of a Metropolis chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub gamma: f64,
    pub particles: usize,
    pub sweeps: usize,
    pub seed: u64,
    /// Ewald settings; `None` tunes them from the default target error.
    pub ewald: Option<EwaldConfig>,
}

impl ChainConfig {
    pub fn new(gamma: f64, particles: usize, sweeps: usize, seed: u64) -> Self {
        ChainConfig { gamma, particles, sweeps, seed, ewald: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Domain(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.particles < MIN_PARTICLES {
            return Err(Error::Domain(format!(
                "need at least {MIN_PARTICLES} particles, got {}",
                self.particles
            )));
        }
        if self.sweeps < 1 {
            return Err(Error::Domain("need at least one sweep".into()));
        }
        Ok(())
    }

    fn burn_in(&self) -> usize {
        self.sweeps / 5
    }
}

/// Output of a Metropolis chain.
#[derive(Clone, Debug)]
pub struct Chain {
    /// Final configuration.
    pub last: ParticleSystem,
    /// Configurations recorded after burn-in, `record_stride` sweeps apart.
    pub configs: Vec<ParticleSystem>,
    /// Potential energy per particle after every production sweep.
    pub energies: Vec<f64>,
    /// Acceptance ratio over the production sweeps.
    pub acceptance: f64,
    /// Tuned maximum displacement per coordinate.
    pub step: f64,
    pub record_stride: usize,
    /// Energy autocorrelation at lag `record_stride` over the production sweeps.
    pub record_correlation: f64,
    pub warnings: Vec<String>,
}

struct Walker {
    sys: ParticleSystem,
    ewald: IncrementalEwald,
    gamma: f64,
    step: f64,
    rng: rand_chacha::ChaCha8Rng,
}

impl Walker {
    /// One sweep of sequential single-particle moves; returns accepted count.
    fn sweep(&mut self) -> usize {
        let mut accepted = 0;
        for i in 0..self.sys.len() {
            let old = self.sys.positions()[i];
            let d: Vec3 = std::array::from_fn(|_| self.step * (2.0 * self.rng.random::<f64>() - 1.0));
            let l = self.sys.box_length();
            let new = std::array::from_fn(|k| crate::ocp_model::wrap(old[k] + d[k], l));
            let mv = self.ewald.trial(&self.sys, i, new);
            let arg = -self.gamma * mv.delta_energy();
            if arg >= 0.0 || self.rng.random::<f64>() < arg.exp() {
                self.ewald.accept(&mut self.sys, mv);
                accepted += 1;
            }
        }
        accepted
    }
}

/// Normalized autocorrelation of `xs` at `lag`.
fn autocorrelation_at(xs: &[f64], lag: usize) -> f64 {
    let (m, v) = stats::mean_var(xs);
    if v == 0.0 || lag >= xs.len() {
        return 0.0;
    }
    let n = xs.len() - lag;
    let c: f64 = (0..n).map(|t| (xs[t] - m) * (xs[t + lag] - m)).sum::<f64>() / n as f64;
    c / v
}

/// Smallest lag at which the autocorrelation of `xs` drops below `level`.
fn decorrelation_lag(xs: &[f64], level: f64) -> usize {
    (1..xs.len() / 2).find(|&lag| autocorrelation_at(xs, lag) < level).unwrap_or(xs.len() / 2).max(1)
}

/// Run a Metropolis chain.
///
/// The first fifth of the sweeps is burn-in: its first half tunes the step
/// towards 40–60 % acceptance, its second half runs at the final step and
/// fixes the recording stride from the energy autocorrelation.
pub fn run_chain(cfg: &ChainConfig) -> Result<Chain> {
    cfg.validate()?;
    let ewald_cfg = match cfg.ewald {
        Some(c) => c,
        None => EwaldConfig::default_for(cfg.particles)?,
    };
    let master = cfg.seed;
    let start = ParticleSystem::random(cfg.particles, rng::derive_seed(master, STREAM_METROPOLIS))?;
    let ewald = IncrementalEwald::new(Ewald::new(ewald_cfg, cfg.particles)?, &start)?;
    let l = start.box_length();
    let mut w = Walker {
        sys: start,
        ewald,
        gamma: cfg.gamma,
        step: 0.25 * l.min(cfg.gamma.recip().sqrt()),
        rng: rng::stream_rng(master, STREAM_METROPOLIS),
    };
    let n = cfg.particles;
    let mut warnings = Vec::new();

    let burn_in = cfg.burn_in();
    let tune = burn_in / 2;
    let mut window = 0;
    for s in 0..tune {
        window += w.sweep();
        if (s + 1) % TUNE_EVERY == 0 {
            let acc = window as f64 / (TUNE_EVERY * n) as f64;
            if acc < TARGET_ACCEPTANCE.0 {
                w.step *= 0.8;
            } else if acc > TARGET_ACCEPTANCE.1 {
                w.step = (w.step * 1.25).min(0.5 * l);
            }
            window = 0;
        }
    }
    let mut pilot = Vec::with_capacity(burn_in - tune);
    let mut pilot_accepted = 0;
    for _ in tune..burn_in {
        pilot_accepted += w.sweep();
        pilot.push(w.ewald.energy() / n as f64);
    }
    // Stride: energy autocorrelation below 0.1 and one expected move per particle.
    let mut stride = if pilot.len() >= 8 { decorrelation_lag(&pilot, RECORD_CORRELATION) } else { 1 };
    if pilot_accepted > 0 {
        let acc = pilot_accepted as f64 / (pilot.len() * n) as f64;
        stride = stride.max((1.0 / acc).ceil() as usize);
    }

    let production = cfg.sweeps - burn_in;
    let mut accepted = 0usize;
    let mut energies = Vec::with_capacity(production);
    let mut configs = Vec::new();
    for s in 0..production {
        accepted += w.sweep();
        if (s + 1) % REFRESH_EVERY == 0 {
            w.ewald.refresh(&w.sys)?;
        }
        energies.push(w.ewald.energy() / n as f64);
        if (s + 1) % stride == 0 {
            configs.push(w.sys.clone());
        }
    }
    let acceptance = if production > 0 { accepted as f64 / (production * n) as f64 } else { 0.0 };
    if production > 0 && !(ACCEPTANCE_WARN.0..=ACCEPTANCE_WARN.1).contains(&acceptance) {
        let msg = format!("acceptance {acceptance:.3} outside [0.1, 0.9] after tuning (step {:.3e})", w.step);
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let record_correlation = autocorrelation_at(&energies, stride);
    if energies.len() > 4 * stride && record_correlation > RECORD_CORRELATION {
        let msg = format!("energy autocorrelation {record_correlation:.3} at record stride {stride}");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let mut last = w.sys;
    last.set_seed(master);
    for c in &mut configs {
        c.set_seed(master);
    }
    Ok(Chain { last, configs, energies, acceptance, step: w.step, record_stride: stride, record_correlation, warnings })
}

/// Final configuration of a Metropolis chain at coupling `gamma`.
pub fn metropolis_positions(gamma: f64, n: usize, sweeps: usize, seed: u64) -> Result<ParticleSystem> {
    Ok(run_chain(&ChainConfig::new(gamma, n, sweeps, seed))?.last)
}

/// Independent standard normal velocity components.
pub fn sample_velocities(n: usize, seed: u64) -> Result<Vec<Vec3>> {
    if n == 0 {
        return Err(Error::Domain("need at least one particle".into()));
    }
    let mut r = rng::stream_rng(seed, STREAM_VELOCITIES);
    Ok((0..n).map(|_| std::array::from_fn(|_| r.sample(StandardNormal))).collect())
}

/// One bin of the microfield magnitude histogram.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    /// Probability density of `|E|` in the bin.
    pub density: f64,
}

/// Pooled statistics of per-particle microfields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicrofieldStats {
    pub mean_field: Vec3,
    /// Trace of the field covariance, `σ²_E`.
    pub variance_total: f64,
    /// Variance of the x and y components summed, `σ²_{E⊥}`.
    pub variance_transverse: f64,
    pub histogram: Vec<HistogramBin>,
    pub sample_count: usize,
    pub stderr_variance: f64,
    /// Block standard error of each mean field component.
    pub stderr_mean: Vec3,
}

/// Microfields of several configurations, one vector per particle.
pub fn collect_fields(configs: &[ParticleSystem], cfg: &EwaldConfig) -> Result<Vec<Vec<Vec3>>> {
    let first = configs.first().ok_or_else(|| Error::Input("no configurations".into()))?;
    let (n, l) = (first.len(), first.box_length());
    if configs.iter().any(|c| c.len() != n || c.box_length() != l) {
        return Err(Error::Input("configurations differ in particle count or box".into()));
    }
    let ewald = Ewald::new(*cfg, n)?;
    configs.iter().map(|c| ewald.field(c)).collect()
}

/// Statistics of microfield vectors grouped by configuration.
pub fn field_statistics(fields: &[Vec<Vec3>]) -> Result<MicrofieldStats> {
    let flat: Vec<Vec3> = fields.iter().flatten().copied().collect();
    if flat.is_empty() {
        return Err(Error::Input("no field samples".into()));
    }
    let count = flat.len() as f64;
    let mean = flat.iter().fold([0.0; 3], |a, e| vec3::add(a, *e));
    let mean = vec3::scale(mean, 1.0 / count);
    let mut var = [0.0; 3];
    for e in &flat {
        for k in 0..3 {
            var[k] += (e[k] - mean[k]).powi(2);
        }
    }
    let var = vec3::scale(var, 1.0 / count);
    let variance_total = var[0] + var[1] + var[2];

    // Block errors over configurations when there are enough of them,
    // otherwise over individual samples.
    let groups: Vec<Vec<Vec3>> = if fields.len() >= MIN_BLOCKS {
        fields.to_vec()
    } else {
        flat.iter().map(|e| vec![*e]).collect()
    };
    let blocks = MIN_BLOCKS.max(((groups.len() as f64).sqrt() as usize).min(64)).min(groups.len());
    let sq: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().map(|e| vec3::norm2(vec3::sub(*e, mean))).sum::<f64>() / g.len() as f64)
        .collect();
    let stderr_variance = stats::block_stderr(&stats::block_means(&sq, blocks));
    let stderr_mean = std::array::from_fn(|k| {
        let comp: Vec<f64> = groups.iter().map(|g| g.iter().map(|e| e[k]).sum::<f64>() / g.len() as f64).collect();
        stats::block_stderr(&stats::block_means(&comp, blocks))
    });

    let width = if variance_total > 0.0 { variance_total.sqrt() / 10.0 } else { 1.0 };
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for e in &flat {
        let b = (vec3::norm(*e) / width) as usize;
        if b < HISTOGRAM_BINS {
            counts[b] += 1;
        }
    }
    let histogram = counts
        .iter()
        .enumerate()
        .map(|(b, &c)| HistogramBin {
            lower: b as f64 * width,
            upper: (b + 1) as f64 * width,
            density: c as f64 / (count * width),
        })
        .collect();

    Ok(MicrofieldStats {
        mean_field: mean,
        variance_total,
        variance_transverse: var[0] + var[1],
        histogram,
        sample_count: flat.len(),
        stderr_variance,
        stderr_mean,
    })
}

/// Pool the Ewald microfields of `configs`.
pub fn microfield_stats(configs: &[ParticleSystem], cfg: &EwaldConfig) -> Result<MicrofieldStats> {
    field_statistics(&collect_fields(configs, cfg)?)
}

/// Outcome of the Iglesias-Lebowitz-MacGowan sum-rule comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlmReport {
    pub measured: f64,
    pub predicted: f64,
    pub ratio: f64,
    pub stderr: f64,
    pub pass: bool,
}

/// Compare `σ²_E` with the sum-rule value `3/Γ`.
pub fn ilm_check(stats: &MicrofieldStats, gamma: f64) -> Result<IlmReport> {
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    let predicted = 3.0 / gamma;
    let ratio = stats.variance_total / predicted;
    let tolerance = 0.1f64.max(3.0 * stats.stderr_variance / predicted);
    Ok(IlmReport {
        measured: stats.variance_total,
        predicted,
        ratio,
        stderr: stats.stderr_variance,
        pass: (ratio - 1.0).abs() < tolerance,
    })
}

/// One bin of the pair correlation function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairBin {
    pub r: f64,
    pub g: f64,
    pub stderr: f64,
}

/// Radial pair correlation `g(r)` up to `r_max ≤ L/2`, with block errors over configurations.
pub fn pair_correlation(configs: &[ParticleSystem], bins: usize, r_max: f64) -> Result<Vec<PairBin>> {
    let first = configs.first().ok_or_else(|| Error::Input("no configurations".into()))?;
    let (n, l) = (first.len(), first.box_length());
    if bins == 0 || !(r_max > 0.0) || r_max > 0.5 * l {
        return Err(Error::Input(format!("need bins > 0 and 0 < r_max <= L/2, got {bins}, {r_max}")));
    }
    let dr = r_max / bins as f64;
    // Pair density of N - 1 partners, so an ideal gas gives g = 1 at any N.
    let density = (n - 1) as f64 / first.volume();
    let shell = |b: usize| 4.0 / 3.0 * std::f64::consts::PI * (((b + 1) as f64 * dr).powi(3) - (b as f64 * dr).powi(3));
    let per_config: Vec<Vec<f64>> = configs
        .iter()
        .map(|c| {
            let mut h = vec![0.0; bins];
            let p = c.positions();
            for i in 0..n {
                for j in (i + 1)..n {
                    let d: Vec3 = std::array::from_fn(|k| crate::ocp_model::minimum_image(p[i][k] - p[j][k], l));
                    let b = (vec3::norm(d) / dr) as usize;
                    if b < bins {
                        h[b] += 2.0;
                    }
                }
            }
            (0..bins).map(|b| h[b] / (n as f64 * density * shell(b))).collect()
        })
        .collect();
    let blocks = MIN_BLOCKS.min(configs.len()).max(1);
    Ok((0..bins)
        .map(|b| {
            let col: Vec<f64> = per_config.iter().map(|g| g[b]).collect();
            let stderr = if configs.len() >= 2 { stats::block_stderr(&stats::block_means(&col, blocks)) } else { f64::NAN };
            PairBin { r: (b as f64 + 0.5) * dr, g: stats::mean(&col), stderr }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(variance: f64, stderr: f64) -> MicrofieldStats {
        MicrofieldStats {
            mean_field: [0.0; 3],
            variance_total: variance,
            variance_transverse: 2.0 / 3.0 * variance,
            histogram: vec![],
            sample_count: 1000,
            stderr_variance: stderr,
            stderr_mean: [0.0; 3],
        }
    }

    #[test]
    fn ilm_check_examples() {
        let r = ilm_check(&synthetic(30.0, 0.5), 0.1).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-12 && r.pass);
        assert!((r.predicted - 30.0).abs() < 1e-12);
        let r = ilm_check(&synthetic(0.0, 0.0), 0.1).unwrap();
        assert!(r.ratio == 0.0 && !r.pass);
        let r = ilm_check(&synthetic(6e5, 1e3), 5e-6).unwrap();
        assert!((r.predicted - 6e5).abs() < 1e-6 && r.pass);
        // A large error bar widens the acceptance band.
        assert!(ilm_check(&synthetic(40.0, 5.0), 0.1).unwrap().pass);
        assert!(!ilm_check(&synthetic(40.0, 0.5), 0.1).unwrap().pass);
        assert!(ilm_check(&synthetic(1.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn chain_rejects_bad_input() {
        assert!(run_chain(&ChainConfig::new(0.0, 32, 10, 1)).is_err());
        assert!(run_chain(&ChainConfig::new(1.0, 8, 10, 1)).is_err());
        assert!(run_chain(&ChainConfig::new(1.0, 32, 0, 1)).is_err());
        assert!(sample_velocities(0, 1).is_err());
    }

    #[test]
    fn lattice_has_no_field_variance() {
        let sys = ParticleSystem::bcc(3).unwrap();
        let cfg = EwaldConfig::default_for(sys.len()).unwrap();
        let st = microfield_stats(&[sys], &cfg).unwrap();
        assert!(st.variance_total < cfg.target_rms_error.powi(2));
        assert!(st.variance_total >= st.variance_transverse && st.variance_transverse >= 0.0);
    }

    #[test]
    fn mixed_shapes_are_rejected() {
        let a = ParticleSystem::random(16, 1).unwrap();
        let b = ParticleSystem::random(20, 1).unwrap();
        let cfg = EwaldConfig::default_for(16).unwrap();
        assert!(matches!(microfield_stats(&[a, b], &cfg), Err(Error::Input(_))));
    }

    #[test]
    fn autocorrelation_helper() {
        let xs: Vec<f64> = (0..1000).map(|i| if (i / 5) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((autocorrelation_at(&xs, 10) - 1.0).abs() < 0.02);
        assert!(decorrelation_lag(&xs, 0.1) >= 2);
    }
}
