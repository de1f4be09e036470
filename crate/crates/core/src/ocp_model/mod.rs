//! Periodic one-component plasma: identical unit charges in a cubic box with a
//! uniform neutralizing background.
//!
//! Lengths are in Wigner-Seitz radii, so the box side satisfies
//! `L³ = (4π/3) N`. Fields are in `e/(4πε₀a²)` and energies in `e²/(4πε₀a)`.

mod direct;
mod ewald;

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;

use crate::vec3::Vec3;
use crate::{rng, Error, Result};

pub use direct::{cube_field, cube_potential, direct_sum_energy, direct_sum_field, DIRECT_SUM_MAX_PARTICLES};
pub use ewald::{
    ewald_energy, ewald_field, kspace_error_estimate, real_space_error_estimate, Ewald, EwaldConfig,
    IncrementalEwald, DEFAULT_TARGET_RMS_ERROR,
};

/// Box side for `n` particles at reduced density `3/(4π)`.
pub fn box_length_for(n: usize) -> f64 {
    (4.0 * PI / 3.0 * n as f64).cbrt()
}

/// Wrap a coordinate into `[0, l)`.
#[inline]
pub fn wrap(x: f64, l: f64) -> f64 {
    let w = x.rem_euclid(l);
    // rem_euclid can round up to exactly l for tiny negative inputs.
    if w >= l {
        0.0
    } else {
        w
    }
}

/// Minimum-image displacement component.
#[inline]
pub fn minimum_image(d: f64, l: f64) -> f64 {
    d - l * (d / l).round()
}

/// Positions and velocities of `N` identical charges in a periodic cubic box.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSystem {
    positions: Vec<Vec3>,
    velocities: Vec<Vec3>,
    box_length: f64,
    seed: u64,
}

impl ParticleSystem {
    /// Build a system; positions are wrapped into the box, whose side is fixed by `N`.
    pub fn new(positions: Vec<Vec3>, velocities: Vec<Vec3>, seed: u64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Input("a particle system needs at least one particle".into()));
        }
        if velocities.len() != positions.len() {
            return Err(Error::Input(format!(
                "{} positions but {} velocities",
                positions.len(),
                velocities.len()
            )));
        }
        if positions.iter().chain(&velocities).flatten().any(|x| !x.is_finite()) {
            return Err(Error::Input("non-finite coordinate".into()));
        }
        let box_length = box_length_for(positions.len());
        let mut sys = ParticleSystem { positions, velocities, box_length, seed };
        for p in &mut sys.positions {
            for x in p.iter_mut() {
                *x = wrap(*x, box_length);
            }
        }
        Ok(sys)
    }

    /// Particles at rest.
    pub fn at_rest(positions: Vec<Vec3>, seed: u64) -> Result<Self> {
        let n = positions.len();
        Self::new(positions, vec![[0.0; 3]; n], seed)
    }

    /// Uniformly random positions, zero velocities.
    pub fn random(n: usize, seed: u64) -> Result<Self> {
        let l = box_length_for(n);
        let mut rng = rng::rng_from_seed(seed);
        let positions = (0..n)
            .map(|_| [rng.random::<f64>() * l, rng.random::<f64>() * l, rng.random::<f64>() * l])
            .collect();
        Self::at_rest(positions, seed)
    }

    /// Simple cubic lattice with `k³` sites.
    pub fn simple_cubic(k: usize) -> Result<Self> {
        let l = box_length_for(k * k * k);
        let h = l / k as f64;
        let mut positions = Vec::with_capacity(k * k * k);
        for i in 0..k {
            for j in 0..k {
                for m in 0..k {
                    positions.push([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (m as f64 + 0.5) * h]);
                }
            }
        }
        Self::at_rest(positions, 0)
    }

    /// Body-centred cubic lattice with `2k³` sites.
    pub fn bcc(k: usize) -> Result<Self> {
        let l = box_length_for(2 * k * k * k);
        let h = l / k as f64;
        let mut positions = Vec::with_capacity(2 * k * k * k);
        for i in 0..k {
            for j in 0..k {
                for m in 0..k {
                    let corner = [i as f64 * h, j as f64 * h, m as f64 * h];
                    positions.push(corner);
                    positions.push([corner[0] + 0.5 * h, corner[1] + 0.5 * h, corner[2] + 0.5 * h]);
                }
            }
        }
        Self::at_rest(positions, 0)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn volume(&self) -> f64 {
        self.box_length.powi(3)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn velocities(&self) -> &[Vec3] {
        &self.velocities
    }

    pub fn velocities_mut(&mut self) -> &mut [Vec3] {
        &mut self.velocities
    }

    pub fn set_velocities(&mut self, velocities: Vec<Vec3>) -> Result<()> {
        if velocities.len() != self.len() {
            return Err(Error::Input("velocity count does not match particle count".into()));
        }
        self.velocities = velocities;
        Ok(())
    }

    /// Write a position, wrapping it into the box.
    pub fn set_position(&mut self, i: usize, p: Vec3) {
        let l = self.box_length;
        self.positions[i] = [wrap(p[0], l), wrap(p[1], l), wrap(p[2], l)];
    }

    /// Shift a particle by `d`, wrapping into the box.
    pub fn displace(&mut self, i: usize, d: Vec3) {
        let p = self.positions[i];
        self.set_position(i, [p[0] + d[0], p[1] + d[1], p[2] + d[2]]);
    }

    /// Total kinetic energy `½ Σ v²` in units of `k_B T`.
    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.velocities.iter().map(|v| crate::vec3::norm2(*v)).sum::<f64>()
    }

    /// Serialize in the `ocp v1` text format: a header line `ocp v1 N L seed`
    /// followed by one `x y z vx vy vz` line per particle, 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.len() * 140 + 64);
        writeln!(out, "ocp v1 {} {:.16e} {}", self.len(), self.box_length, self.seed).unwrap();
        for (p, v) in self.positions.iter().zip(&self.velocities) {
            writeln!(
                out,
                "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
                p[0], p[1], p[2], v[0], v[1], v[2]
            )
            .unwrap();
        }
        out
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    /// Parse the `ocp v1` text format.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or(Error::Parse { line: 1, message: "empty file".into() })??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "ocp" || fields[1] != "v1" {
            return Err(Error::Parse { line: 1, message: format!("bad header '{header}'") });
        }
        let bad_header = |what: &str| Error::Parse { line: 1, message: format!("bad {what} in header") };
        let n: usize = fields[2].parse().map_err(|_| bad_header("N"))?;
        let l: f64 = fields[3].parse().map_err(|_| bad_header("L"))?;
        let seed: u64 = fields[4].parse().map_err(|_| bad_header("seed"))?;
        let mut positions = Vec::with_capacity(n);
        let mut velocities = Vec::with_capacity(n);
        for (idx, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = idx + 2;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
            if vals.len() != 6 {
                return Err(Error::Parse { line: lineno, message: format!("expected 6 values, got {}", vals.len()) });
            }
            positions.push([vals[0], vals[1], vals[2]]);
            velocities.push([vals[3], vals[4], vals[5]]);
        }
        if positions.len() != n {
            return Err(Error::Parse {
                line: 1,
                message: format!("header announces {n} particles, file has {}", positions.len()),
            });
        }
        let sys = Self::new(positions, velocities, seed)?;
        if ((sys.box_length - l) / l).abs() > 1e-12 {
            return Err(Error::Parse {
                line: 1,
                message: format!("box length {l} inconsistent with N = {n}"),
            });
        }
        Ok(sys)
    }
}
