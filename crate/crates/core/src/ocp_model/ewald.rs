use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{box_length_for, minimum_image, ParticleSystem};
use crate::vec3::{self, Vec3};
use crate::{Error, Result};

/// Default RMS field error per particle, in reduced field units.
pub const DEFAULT_TARGET_RMS_ERROR: f64 = 1e-5;

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// Ewald splitting parameters.
///
/// `kspace_cutoff` is the largest integer index norm `|m|` of reciprocal
/// vectors `k = 2π m / L` kept in the sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EwaldConfig {
    pub splitting_alpha: f64,
    pub real_cutoff: f64,
    pub kspace_cutoff: usize,
    pub target_rms_error: f64,
}

/// RMS real-space truncation error of the field for `n` unit charges
/// (Kolafa-Perram estimate).
pub fn real_space_error_estimate(alpha: f64, cutoff: f64, n: usize) -> f64 {
    let volume = box_length_for(n).powi(3);
    2.0 * (n as f64 / (cutoff * volume)).sqrt() * (-alpha * alpha * cutoff * cutoff).exp()
}

/// RMS reciprocal-space truncation error of the field for `n` unit charges.
pub fn kspace_error_estimate(alpha: f64, kmax: usize, n: usize) -> f64 {
    let l = box_length_for(n);
    let km = kmax as f64;
    2.0 * alpha / l * (n as f64 / (PI * km)).sqrt() * (-(PI * km / (alpha * l)).powi(2)).exp()
}

const MAX_KSPACE_CUTOFF: usize = 64;

/// Fraction of the target each estimated error is tuned to. The estimates
/// are asymptotic and the two contributions add, so tuning to the target
/// itself leaves the measured error slightly above it.
const TUNING_MARGIN: f64 = 0.25;

fn smallest_kmax(alpha: f64, n: usize, target: f64) -> Result<usize> {
    (1..=MAX_KSPACE_CUTOFF)
        .find(|&k| kspace_error_estimate(alpha, k, n) < target)
        .ok_or_else(|| Error::Config(format!("no k-space cutoff up to {MAX_KSPACE_CUTOFF} reaches {target:e}")))
}

impl EwaldConfig {
    /// Tune all parameters from the target error: the real-space cutoff is
    /// half the box, `alpha` makes the real-space error meet the target, and
    /// the smallest sufficient k-space cutoff is taken.
    pub fn auto(n: usize, target_rms_error: f64) -> Result<Self> {
        check_target(target_rms_error)?;
        let rc = 0.5 * box_length_for(n);
        let prefactor = real_space_error_estimate(0.0, rc, n);
        let goal = TUNING_MARGIN * target_rms_error;
        let alpha = ((prefactor / goal).ln().max(1.0)).sqrt() / rc;
        let kmax = smallest_kmax(alpha, n, goal)?;
        let cfg = EwaldConfig { splitting_alpha: alpha, real_cutoff: rc, kspace_cutoff: kmax, target_rms_error };
        cfg.validate(n)?;
        Ok(cfg)
    }

    /// Fix `alpha` and derive the smallest cutoffs meeting the target.
    pub fn with_alpha(n: usize, alpha: f64, target_rms_error: f64) -> Result<Self> {
        check_target(target_rms_error)?;
        if !(alpha > 0.0) {
            return Err(Error::Config(format!("splitting alpha must be positive, got {alpha}")));
        }
        let half = 0.5 * box_length_for(n);
        let goal = TUNING_MARGIN * target_rms_error;
        // The error estimate is monotone in the cutoff: bisect.
        if real_space_error_estimate(alpha, half, n) >= goal {
            return Err(Error::Config(format!(
                "alpha = {alpha} needs a real-space cutoff beyond half the box ({half})"
            )));
        }
        let (mut lo, mut hi) = (1e-3 * half, half);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if real_space_error_estimate(alpha, mid, n) < goal {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let kmax = smallest_kmax(alpha, n, goal)?;
        let cfg = EwaldConfig { splitting_alpha: alpha, real_cutoff: hi, kspace_cutoff: kmax, target_rms_error };
        cfg.validate(n)?;
        Ok(cfg)
    }

    pub fn default_for(n: usize) -> Result<Self> {
        Self::auto(n, DEFAULT_TARGET_RMS_ERROR)
    }

    pub fn real_space_error(&self, n: usize) -> f64 {
        real_space_error_estimate(self.splitting_alpha, self.real_cutoff, n)
    }

    pub fn kspace_error(&self, n: usize) -> f64 {
        kspace_error_estimate(self.splitting_alpha, self.kspace_cutoff, n)
    }

    /// Check the minimum-image and truncation-error invariants for `n` particles.
    pub fn validate(&self, n: usize) -> Result<()> {
        check_target(self.target_rms_error)?;
        let half = 0.5 * box_length_for(n);
        if !(self.splitting_alpha > 0.0) || !(self.real_cutoff > 0.0) || self.kspace_cutoff == 0 {
            return Err(Error::Config(format!("non-positive Ewald parameter in {self:?}")));
        }
        if self.real_cutoff > half * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "real-space cutoff {} exceeds half the box {half}",
                self.real_cutoff
            )));
        }
        let (er, ek) = (self.real_space_error(n), self.kspace_error(n));
        if er >= self.target_rms_error || ek >= self.target_rms_error {
            return Err(Error::Config(format!(
                "estimated truncation errors (real {er:.2e}, k-space {ek:.2e}) exceed target {:.2e}",
                self.target_rms_error
            )));
        }
        Ok(())
    }
}

fn check_target(target: f64) -> Result<()> {
    if target > 0.0 && target < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("target RMS error must lie in (0, 1), got {target}")))
    }
}

#[derive(Clone, Debug)]
struct KVector {
    index: [i32; 3],
    k: Vec3,
    /// `(4π/V) exp(-k²/4α²) / k²`, counting the `±k` pair once.
    coef: f64,
}

/// Ewald evaluator for a fixed particle count.
#[derive(Clone, Debug)]
pub struct Ewald {
    cfg: EwaldConfig,
    n: usize,
    box_length: f64,
    kvectors: Vec<KVector>,
}

impl Ewald {
    pub fn new(cfg: EwaldConfig, n: usize) -> Result<Self> {
        cfg.validate(n)?;
        let box_length = box_length_for(n);
        let volume = box_length.powi(3);
        let kmax = cfg.kspace_cutoff as i32;
        let two_pi_l = 2.0 * PI / box_length;
        let inv_four_alpha2 = 0.25 / (cfg.splitting_alpha * cfg.splitting_alpha);
        let mut kvectors = Vec::new();
        for mx in 0..=kmax {
            for my in -kmax..=kmax {
                for mz in -kmax..=kmax {
                    // Half space: one representative of each ±k pair.
                    let upper = mx > 0 || (mx == 0 && (my > 0 || (my == 0 && mz > 0)));
                    let m2 = mx * mx + my * my + mz * mz;
                    if !upper || m2 > kmax * kmax {
                        continue;
                    }
                    let k = [two_pi_l * mx as f64, two_pi_l * my as f64, two_pi_l * mz as f64];
                    let k2 = vec3::norm2(k);
                    let coef = 4.0 * PI / volume * (-k2 * inv_four_alpha2).exp() / k2;
                    kvectors.push(KVector { index: [mx, my, mz], k, coef });
                }
            }
        }
        Ok(Ewald { cfg, n, box_length, kvectors })
    }

    pub fn config(&self) -> &EwaldConfig {
        &self.cfg
    }

    pub fn particle_count(&self) -> usize {
        self.n
    }

    pub fn kvector_count(&self) -> usize {
        self.kvectors.len()
    }

    fn check(&self, sys: &ParticleSystem) -> Result<()> {
        if sys.len() != self.n {
            return Err(Error::Input(format!(
                "Ewald set up for {} particles, system has {}",
                self.n,
                sys.len()
            )));
        }
        Ok(())
    }

    /// `e^{i k·r}` for every half-space k-vector.
    fn phase_row(&self, r: Vec3) -> Vec<Complex64> {
        let kmax = self.cfg.kspace_cutoff;
        let base = 2.0 * PI / self.box_length;
        let mut tables = [vec![Complex64::new(1.0, 0.0); kmax + 1], vec![Complex64::new(1.0, 0.0); kmax + 1], vec![Complex64::new(1.0, 0.0); kmax + 1]];
        for d in 0..3 {
            let step = Complex64::from_polar(1.0, base * r[d]);
            for m in 1..=kmax {
                tables[d][m] = tables[d][m - 1] * step;
            }
        }
        let lookup = |d: usize, m: i32| {
            let c = tables[d][m.unsigned_abs() as usize];
            if m < 0 {
                c.conj()
            } else {
                c
            }
        };
        self.kvectors
            .iter()
            .map(|kv| lookup(0, kv.index[0]) * lookup(1, kv.index[1]) * lookup(2, kv.index[2]))
            .collect()
    }

    fn phase_rows(&self, sys: &ParticleSystem) -> Vec<Vec<Complex64>> {
        sys.positions().par_iter().map(|&r| self.phase_row(r)).collect()
    }

    fn structure_factors(&self, rows: &[Vec<Complex64>]) -> Vec<Complex64> {
        let mut s = vec![Complex64::new(0.0, 0.0); self.kvectors.len()];
        for row in rows {
            for (acc, e) in s.iter_mut().zip(row) {
                *acc += e;
            }
        }
        s
    }

    fn pair_field(&self, d: Vec3, r2: f64) -> Vec3 {
        let alpha = self.cfg.splitting_alpha;
        let r = r2.sqrt();
        let mag = (libm::erfc(alpha * r) + FRAC_2_SQRT_PI * alpha * r * (-alpha * alpha * r2).exp()) / (r2 * r);
        vec3::scale(d, mag)
    }

    fn real_space(&self, sys: &ParticleSystem, want_field: bool) -> (Vec<Vec3>, f64) {
        let pos = sys.positions();
        let l = self.box_length;
        let rc2 = self.cfg.real_cutoff * self.cfg.real_cutoff;
        let alpha = self.cfg.splitting_alpha;
        let mut field = vec![[0.0; 3]; if want_field { pos.len() } else { 0 }];
        let mut energy = 0.0;
        for i in 0..pos.len() {
            for j in (i + 1)..pos.len() {
                let d = [
                    minimum_image(pos[i][0] - pos[j][0], l),
                    minimum_image(pos[i][1] - pos[j][1], l),
                    minimum_image(pos[i][2] - pos[j][2], l),
                ];
                let r2 = vec3::norm2(d);
                if r2 >= rc2 {
                    continue;
                }
                let r = r2.sqrt();
                energy += libm::erfc(alpha * r) / r;
                if want_field {
                    let f = self.pair_field(d, r2);
                    field[i] = vec3::add(field[i], f);
                    field[j] = vec3::sub(field[j], f);
                }
            }
        }
        (field, energy)
    }

    fn constant_terms(&self) -> f64 {
        let n = self.n as f64;
        let alpha = self.cfg.splitting_alpha;
        let volume = self.box_length.powi(3);
        -alpha * n / PI.sqrt() - PI * n * n / (2.0 * volume * alpha * alpha)
    }

    /// Field at every particle and the total potential energy.
    pub fn field_and_energy(&self, sys: &ParticleSystem) -> Result<(Vec<Vec3>, f64)> {
        self.check(sys)?;
        let (mut field, e_real) = self.real_space(sys, true);
        let rows = self.phase_rows(sys);
        let s = self.structure_factors(&rows);
        let e_k: f64 = self.kvectors.iter().zip(&s).map(|(kv, s)| kv.coef * s.norm_sqr()).sum();
        let kfield: Vec<Vec3> = rows
            .par_iter()
            .map(|row| {
                let mut e = [0.0; 3];
                for ((kv, ph), sk) in self.kvectors.iter().zip(row).zip(&s) {
                    let w = 2.0 * kv.coef * (ph * sk.conj()).im;
                    e[0] += w * kv.k[0];
                    e[1] += w * kv.k[1];
                    e[2] += w * kv.k[2];
                }
                e
            })
            .collect();
        for (f, k) in field.iter_mut().zip(kfield) {
            *f = vec3::add(*f, k);
        }
        Ok((field, e_real + e_k + self.constant_terms()))
    }

    pub fn field(&self, sys: &ParticleSystem) -> Result<Vec<Vec3>> {
        Ok(self.field_and_energy(sys)?.0)
    }

    /// Total potential energy (pair, self and background terms).
    pub fn energy(&self, sys: &ParticleSystem) -> Result<f64> {
        self.check(sys)?;
        let (_, e_real) = self.real_space(sys, false);
        let rows = self.phase_rows(sys);
        let s = self.structure_factors(&rows);
        let e_k: f64 = self.kvectors.iter().zip(&s).map(|(kv, s)| kv.coef * s.norm_sqr()).sum();
        Ok(e_real + e_k + self.constant_terms())
    }
}

/// Microfield at every particle for unit like charges in a neutralizing background.
pub fn ewald_field(sys: &ParticleSystem, cfg: &EwaldConfig) -> Result<Vec<Vec3>> {
    Ewald::new(*cfg, sys.len())?.field(sys)
}

/// Potential energy per particle of the one-component plasma.
pub fn ewald_energy(sys: &ParticleSystem, cfg: &EwaldConfig) -> Result<f64> {
    Ok(Ewald::new(*cfg, sys.len())?.energy(sys)? / sys.len() as f64)
}

/// Ewald energy bookkeeping for single-particle Monte Carlo moves.
///
/// Keeps the structure factors and every particle's phase row so a trial move
/// costs `O(N + N_k)`.
#[derive(Clone, Debug)]
pub struct IncrementalEwald {
    ewald: Ewald,
    rows: Vec<Vec<Complex64>>,
    s: Vec<Complex64>,
    energy: f64,
}

/// Precomputed data of a proposed move, consumed by [`IncrementalEwald::accept`].
#[derive(Clone, Debug)]
pub struct TrialMove {
    particle: usize,
    position: Vec3,
    row: Vec<Complex64>,
    delta: f64,
}

impl TrialMove {
    /// Total energy change of the move.
    pub fn delta_energy(&self) -> f64 {
        self.delta
    }
}

impl IncrementalEwald {
    pub fn new(ewald: Ewald, sys: &ParticleSystem) -> Result<Self> {
        let energy = ewald.energy(sys)?;
        let rows = ewald.phase_rows(sys);
        let s = ewald.structure_factors(&rows);
        Ok(IncrementalEwald { ewald, rows, s, energy })
    }

    /// Current total energy.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn ewald(&self) -> &Ewald {
        &self.ewald
    }

    /// Energy change for moving particle `i` to `new_position` (already wrapped).
    pub fn trial(&self, sys: &ParticleSystem, i: usize, new_position: Vec3) -> TrialMove {
        let pos = sys.positions();
        let l = sys.box_length();
        let rc2 = self.ewald.cfg.real_cutoff.powi(2);
        let alpha = self.ewald.cfg.splitting_alpha;
        let pair = |a: Vec3, b: Vec3| {
            let d = [minimum_image(a[0] - b[0], l), minimum_image(a[1] - b[1], l), minimum_image(a[2] - b[2], l)];
            let r2 = vec3::norm2(d);
            if r2 >= rc2 {
                0.0
            } else {
                let r = r2.sqrt();
                libm::erfc(alpha * r) / r
            }
        };
        let mut delta = 0.0;
        for (j, &pj) in pos.iter().enumerate() {
            if j != i {
                delta += pair(new_position, pj) - pair(pos[i], pj);
            }
        }
        let row = self.ewald.phase_row(new_position);
        for ((kv, s), (new, old)) in self.ewald.kvectors.iter().zip(&self.s).zip(row.iter().zip(&self.rows[i])) {
            let s_new = s + new - old;
            delta += kv.coef * (s_new.norm_sqr() - s.norm_sqr());
        }
        TrialMove { particle: i, position: new_position, row, delta }
    }

    /// Apply an accepted move to both the bookkeeping and the system.
    pub fn accept(&mut self, sys: &mut ParticleSystem, mv: TrialMove) {
        let i = mv.particle;
        for ((s, new), old) in self.s.iter_mut().zip(&mv.row).zip(&self.rows[i]) {
            *s += new - old;
        }
        self.rows[i] = mv.row;
        self.energy += mv.delta;
        sys.set_position(i, mv.position);
    }

    /// Recompute everything from scratch, discarding accumulated rounding.
    pub fn refresh(&mut self, sys: &ParticleSystem) -> Result<()> {
        *self = IncrementalEwald::new(self.ewald.clone(), sys)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn rms(a: &[Vec3], b: &[Vec3]) -> f64 {
        let s: f64 = a.iter().zip(b).map(|(x, y)| vec3::norm2(vec3::sub(*x, *y))).sum();
        (s / a.len() as f64).sqrt()
    }

    #[test]
    fn auto_config_meets_its_own_invariants() {
        for n in [2usize, 16, 64, 128, 250, 1024] {
            let cfg = EwaldConfig::default_for(n).unwrap();
            cfg.validate(n).unwrap();
            assert!(cfg.real_cutoff <= 0.5 * box_length_for(n) + 1e-12);
        }
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = EwaldConfig::default_for(64).unwrap();
        cfg.kspace_cutoff = 2;
        assert!(matches!(cfg.validate(64), Err(Error::Config(_))));
        let sys = ParticleSystem::random(64, 3).unwrap();
        assert!(matches!(ewald_field(&sys, &cfg), Err(Error::Config(_))));
        let mut cfg = EwaldConfig::default_for(64).unwrap();
        cfg.real_cutoff = box_length_for(64);
        assert!(cfg.validate(64).is_err());
        assert!(EwaldConfig::with_alpha(64, 0.1, 1e-5).is_err());
        assert!(EwaldConfig::auto(64, 0.0).is_err());
    }

    #[test]
    fn close_pair_follows_coulomb_law() {
        let l = box_length_for(2);
        let cfg = EwaldConfig::default_for(2).unwrap();
        // At r = 0.02 L the image and background corrections, (4π/3)(r/L)³
        // relative, are below 1e-4.
        let r = 0.02 * l;
        let sys = ParticleSystem::at_rest(vec![[0.4 * l, 0.5 * l, 0.5 * l], [0.4 * l + r, 0.5 * l, 0.5 * l]], 0).unwrap();
        let e = ewald_field(&sys, &cfg).unwrap();
        let coulomb = 1.0 / (r * r);
        assert!(((-e[0][0]) / coulomb - 1.0).abs() < 1e-4, "{:?}", e);
        assert!((e[1][0] / coulomb - 1.0).abs() < 1e-4);
        // At r = 0.05 L the background correction -(4π/3V) r is resolved.
        let r = 0.05 * l;
        let sys = ParticleSystem::at_rest(vec![[0.4 * l, 0.5 * l, 0.5 * l], [0.4 * l + r, 0.5 * l, 0.5 * l]], 0).unwrap();
        let e = ewald_field(&sys, &cfg).unwrap();
        let expected = 1.0 / (r * r) - 4.0 * PI / (3.0 * l.powi(3)) * r;
        assert!((e[1][0] / expected - 1.0).abs() < 1e-4, "{} vs {}", e[1][0], expected);
        for c in 1..3 {
            assert!(e[0][c].abs() < 1e-5 && e[1][c].abs() < 1e-5);
        }
    }

    #[test]
    fn lattices_feel_no_field() {
        for sys in [ParticleSystem::simple_cubic(4).unwrap(), ParticleSystem::bcc(3).unwrap()] {
            let cfg = EwaldConfig::default_for(sys.len()).unwrap();
            let e = ewald_field(&sys, &cfg).unwrap();
            let zero = vec![[0.0; 3]; sys.len()];
            assert!(rms(&e, &zero) < cfg.target_rms_error);
        }
    }

    #[test]
    fn bcc_madelung_energy() {
        let sys = ParticleSystem::bcc(4).unwrap();
        let cfg = EwaldConfig::default_for(sys.len()).unwrap();
        let u = ewald_energy(&sys, &cfg).unwrap();
        assert!((u + 0.895_929_255).abs() < 1e-5, "{u}");
        // Tighter splitting recovers the bcc Madelung constant to eight digits.
        let tight = EwaldConfig::auto(sys.len(), 1e-9).unwrap();
        let u = ewald_energy(&sys, &tight).unwrap();
        assert!((u + 0.895_929_255_7).abs() < 1e-8, "{u}");
    }

    #[test]
    fn energy_is_translation_invariant() {
        let sys = ParticleSystem::random(32, 9).unwrap();
        let cfg = EwaldConfig::default_for(32).unwrap();
        let u0 = ewald_energy(&sys, &cfg).unwrap();
        let mut shifted = sys.clone();
        for i in 0..shifted.len() {
            shifted.displace(i, [0.37, -1.21, 2.9]);
        }
        let u1 = ewald_energy(&shifted, &cfg).unwrap();
        assert!((u0 - u1).abs() < 1e-10, "{u0} {u1}");
    }

    #[test]
    fn net_field_vanishes() {
        let sys = ParticleSystem::random(100, 4).unwrap();
        let cfg = EwaldConfig::default_for(100).unwrap();
        let e = ewald_field(&sys, &cfg).unwrap();
        let total = e.iter().fold([0.0; 3], |a, b| vec3::add(a, *b));
        assert!(vec3::norm(total) < 100.0 * cfg.target_rms_error);
    }

    #[test]
    fn result_does_not_depend_on_alpha() {
        let n = 64;
        let sys = ParticleSystem::random(n, 11).unwrap();
        let a = EwaldConfig::default_for(n).unwrap();
        let b = EwaldConfig::with_alpha(n, 1.5 * a.splitting_alpha, a.target_rms_error).unwrap();
        let fa = ewald_field(&sys, &a).unwrap();
        let fb = ewald_field(&sys, &b).unwrap();
        assert!(rms(&fa, &fb) < 2.0 * a.target_rms_error, "{}", rms(&fa, &fb));
        let ua = ewald_energy(&sys, &a).unwrap();
        let ub = ewald_energy(&sys, &b).unwrap();
        assert!((ua - ub).abs() < 1e-5);
    }

    #[test]
    fn field_is_minus_energy_gradient() {
        let n = 16;
        let sys = ParticleSystem::random(n, 5).unwrap();
        let cfg = EwaldConfig::default_for(n).unwrap();
        let ewald = Ewald::new(cfg, n).unwrap();
        let field = ewald.field(&sys).unwrap();
        let h = 1e-5;
        for i in 0..n {
            let mut grad = [0.0; 3];
            for d in 0..3 {
                let mut plus = sys.clone();
                let mut step = [0.0; 3];
                step[d] = h;
                plus.displace(i, step);
                let mut minus = sys.clone();
                step[d] = -h;
                minus.displace(i, step);
                grad[d] = (ewald.energy(&plus).unwrap() - ewald.energy(&minus).unwrap()) / (2.0 * h);
            }
            let diff = vec3::norm(vec3::add(field[i], grad));
            assert!(diff < 1e-4 * vec3::norm(field[i]).max(1.0), "particle {i}: {:?} vs {:?}", field[i], grad);
        }
    }

    #[test]
    fn permutation_equivariance() {
        let n = 40;
        let sys = ParticleSystem::random(n, 21).unwrap();
        let cfg = EwaldConfig::default_for(n).unwrap();
        let f = ewald_field(&sys, &cfg).unwrap();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        let permuted = ParticleSystem::at_rest(perm.iter().map(|&p| sys.positions()[p]).collect(), 0).unwrap();
        let g = ewald_field(&permuted, &cfg).unwrap();
        for (k, &p) in perm.iter().enumerate() {
            assert!(vec3::norm(vec3::sub(g[k], f[p])) < 1e-10);
        }
    }

    #[test]
    fn incremental_moves_track_full_energy() {
        let n = 32;
        let mut sys = ParticleSystem::random(n, 2).unwrap();
        let ewald = Ewald::new(EwaldConfig::default_for(n).unwrap(), n).unwrap();
        let mut inc = IncrementalEwald::new(ewald.clone(), &sys).unwrap();
        let mut r = rng::rng_from_seed(77);
        for step in 0..200 {
            let i = step % n;
            let p = sys.positions()[i];
            let l = sys.box_length();
            let target = [
                super::super::wrap(p[0] + r.random::<f64>() - 0.5, l),
                super::super::wrap(p[1] + r.random::<f64>() - 0.5, l),
                super::super::wrap(p[2] + r.random::<f64>() - 0.5, l),
            ];
            let before = ewald.energy(&sys).unwrap();
            let mv = inc.trial(&sys, i, target);
            let delta = mv.delta_energy();
            inc.accept(&mut sys, mv);
            let after = ewald.energy(&sys).unwrap();
            assert!((after - before - delta).abs() < 1e-9, "step {step}");
        }
        assert!((inc.energy() - ewald.energy(&sys).unwrap()).abs() < 1e-8);
    }
}
