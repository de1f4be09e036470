//! Physical constants, the reduced-unit system and closed-form predictions.
//!
//! Reduced units used throughout the crate:
//!
//! - length: Wigner-Seitz radius `a`, with `(4π/3) n a³ = 1`;
//! - time: `1/ω_p`;
//! - velocity: thermal velocity `sqrt(k_B T / m)`;
//! - energy: `k_B T` for dynamics, `e²/(4πε₀ a)` for configurational energies;
//! - field: `e/(4πε₀ a²)` for microfield statistics.
//!
//! Only the electron species is modeled.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `sqrt(2/3)`: the magnetization at which the predicted perturbation parameter is one.
pub const THRESHOLD_BETA: f64 = 0.816_496_580_927_726;

/// Default electron density used when none is given \[m⁻³\].
pub const DEFAULT_DENSITY: f64 = 1.0e19;
/// Default temperature used when none is given \[eV\].
pub const DEFAULT_TEMPERATURE_EV: f64 = 1000.0;
/// Default particle count of a simulation cell.
pub const DEFAULT_PARTICLES: usize = 128;

/// CODATA-2018 values of the constants entering the model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalConstants {
    elementary_charge: f64,
    electron_mass: f64,
    vacuum_permittivity: f64,
    boltzmann: f64,
}

/// The constant set every public function of this module uses.
pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
    elementary_charge: 1.602_176_634e-19,
    electron_mass: 9.109_383_701_5e-31,
    vacuum_permittivity: 8.854_187_812_8e-12,
    boltzmann: 1.380_649e-23,
};

impl PhysicalConstants {
    pub const fn codata_2018() -> Self {
        CODATA_2018
    }

    /// |e| \[C\]
    pub fn elementary_charge(&self) -> f64 {
        self.elementary_charge
    }

    /// m \[kg\]
    pub fn electron_mass(&self) -> f64 {
        self.electron_mass
    }

    /// ε₀ \[F/m\]
    pub fn vacuum_permittivity(&self) -> f64 {
        self.vacuum_permittivity
    }

    /// k_B \[J/K\]
    pub fn boltzmann(&self) -> f64 {
        self.boltzmann
    }

    /// Kelvin per electronvolt.
    pub fn kelvin_per_ev(&self) -> f64 {
        self.elementary_charge / self.boltzmann
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        CODATA_2018
    }
}

/// A temperature with its unit, as accepted from configuration (`"1keV"`,
/// `"500 eV"`, `"1.2e7K"`). Stored internally in kelvin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Temperature {
    kelvin: f64,
}

impl Temperature {
    pub fn from_kelvin(kelvin: f64) -> Result<Self> {
        if !(kelvin > 0.0) || !kelvin.is_finite() {
            return Err(Error::Domain(format!("temperature must be positive, got {kelvin} K")));
        }
        Ok(Temperature { kelvin })
    }

    pub fn from_ev(ev: f64) -> Result<Self> {
        Self::from_kelvin(ev * CODATA_2018.kelvin_per_ev())
    }

    pub fn kelvin(&self) -> f64 {
        self.kelvin
    }

    pub fn ev(&self) -> f64 {
        self.kelvin / CODATA_2018.kelvin_per_ev()
    }

    /// Parse a number followed by a mandatory unit suffix `K`, `eV` or `keV`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let parse_number = |number: &str| -> Result<f64> {
            number
                .trim()
                .parse()
                .map_err(|_| Error::Domain(format!("cannot parse temperature '{text}'")))
        };
        if let Some(number) = text.strip_suffix("keV") {
            Self::from_ev(parse_number(number)? * 1.0e3)
        } else if let Some(number) = text.strip_suffix("eV") {
            Self::from_ev(parse_number(number)?)
        } else if let Some(number) = text.strip_suffix('K') {
            Self::from_kelvin(parse_number(number)?)
        } else {
            Err(Error::Domain(format!("temperature '{text}' needs a unit suffix (K, eV or keV)")))
        }
    }
}

/// Macroscopic state of the electron gas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlasmaParams {
    /// Electron number density \[m⁻³\].
    pub density_n: f64,
    /// Temperature \[K\].
    pub temperature_t: f64,
    /// Magnetic field strength \[T\].
    pub field_b: f64,
}

impl PlasmaParams {
    pub fn new(density_n: f64, temperature: Temperature, field_b: f64) -> Result<Self> {
        positive("density", density_n)?;
        positive("field B", field_b)?;
        Ok(PlasmaParams { density_n, temperature_t: temperature.kelvin(), field_b })
    }
}

/// Dimensionless state of a simulation cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedParams {
    /// Γ = e²/(4πε₀ a k_B T).
    pub coupling_gamma: f64,
    /// β = ω_c/ω_p.
    pub magnetization_beta: f64,
    pub particle_count_n: usize,
}

impl ReducedParams {
    pub fn new(coupling_gamma: f64, magnetization_beta: f64, particle_count_n: usize) -> Result<Self> {
        positive("coupling Gamma", coupling_gamma)?;
        positive("magnetization beta", magnetization_beta)?;
        if particle_count_n < 2 {
            return Err(Error::Domain(format!("need at least 2 particles, got {particle_count_n}")));
        }
        Ok(ReducedParams { coupling_gamma, magnetization_beta, particle_count_n })
    }

    /// Recover the SI state. The reduction loses one dimensional scale, so the
    /// density has to be supplied.
    pub fn to_physical(&self, density_n: f64) -> Result<PlasmaParams> {
        let c = CODATA_2018;
        positive("density", density_n)?;
        let a = wigner_seitz_radius(density_n)?;
        let e2 = c.elementary_charge * c.elementary_charge;
        let kelvin = e2 / (4.0 * PI * c.vacuum_permittivity * a * c.boltzmann * self.coupling_gamma);
        let b = self.magnetization_beta * plasma_frequency(density_n)? * c.electron_mass
            / c.elementary_charge;
        PlasmaParams::new(density_n, Temperature::from_kelvin(kelvin)?, b)
    }
}

fn positive(what: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be positive, got {value}")))
    }
}

/// ω_c = |e| B / m \[rad/s\].
pub fn cyclotron_frequency(field_b: f64) -> Result<f64> {
    positive("field B", field_b)?;
    Ok(CODATA_2018.elementary_charge * field_b / CODATA_2018.electron_mass)
}

/// ω_p = sqrt(n e² / (ε₀ m)) \[rad/s\].
pub fn plasma_frequency(density_n: f64) -> Result<f64> {
    positive("density", density_n)?;
    let c = CODATA_2018;
    Ok((density_n * c.elementary_charge * c.elementary_charge
        / (c.vacuum_permittivity * c.electron_mass))
        .sqrt())
}

/// a = (3 / (4π n))^(1/3) \[m\].
pub fn wigner_seitz_radius(density_n: f64) -> Result<f64> {
    positive("density", density_n)?;
    Ok((3.0 / (4.0 * PI * density_n)).cbrt())
}

/// Perturbation parameter of the macroscopic state, with the microfield
/// variance taken from the one-component-plasma sum rule σ²_E = n k_B T/ε₀.
///
/// The temperature enters numerator and denominator and cancels.
pub fn epsilon_macroscopic(p: &PlasmaParams) -> f64 {
    let c = CODATA_2018;
    let kt = c.boltzmann * p.temperature_t;
    let sigma_e = (p.density_n * kt / c.vacuum_permittivity).sqrt();
    let thermal_velocity = (kt / c.electron_mass).sqrt();
    (2.0f64 / 3.0).sqrt() * sigma_e / (p.field_b * thermal_velocity)
}

/// ε = sqrt(2/3) / β.
pub fn epsilon_from_beta(beta: f64) -> Result<f64> {
    positive("beta", beta)?;
    Ok((2.0f64 / 3.0).sqrt() / beta)
}

/// Density at which the perturbation parameter reaches one:
/// n = (3/2) (ε₀/m) B² \[m⁻³\].
pub fn density_limit(field_b: f64) -> Result<f64> {
    positive("field B", field_b)?;
    let c = CODATA_2018;
    Ok(1.5 * c.vacuum_permittivity / c.electron_mass * field_b * field_b)
}

/// Γ and β of a macroscopic state, for a cell of `particles` electrons.
pub fn to_reduced(p: &PlasmaParams, particles: usize) -> Result<ReducedParams> {
    let c = CODATA_2018;
    let a = wigner_seitz_radius(p.density_n)?;
    let gamma = c.elementary_charge * c.elementary_charge
        / (4.0 * PI * c.vacuum_permittivity * a * c.boltzmann * p.temperature_t);
    let beta = cyclotron_frequency(p.field_b)? / plasma_frequency(p.density_n)?;
    ReducedParams::new(gamma, beta, particles)
}

/// Everything `predict` reports for one macroscopic state.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Prediction {
    pub input: PredictionInput,
    pub omega_c_rad_per_s: f64,
    pub omega_p_rad_per_s: f64,
    pub gamma: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub n_limit_per_m3: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PredictionInput {
    #[serde(rename = "B_tesla")]
    pub b_tesla: f64,
    pub n_per_m3: f64,
    pub t_kelvin: f64,
    pub t_ev: f64,
}

impl Prediction {
    pub fn evaluate(p: &PlasmaParams) -> Result<Self> {
        let reduced = to_reduced(p, 2)?;
        Ok(Prediction {
            input: PredictionInput {
                b_tesla: p.field_b,
                n_per_m3: p.density_n,
                t_kelvin: p.temperature_t,
                t_ev: p.temperature_t / CODATA_2018.kelvin_per_ev(),
            },
            omega_c_rad_per_s: cyclotron_frequency(p.field_b)?,
            omega_p_rad_per_s: plasma_frequency(p.density_n)?,
            gamma: reduced.coupling_gamma,
            beta: reduced.magnetization_beta,
            epsilon: epsilon_macroscopic(p),
            n_limit_per_m3: density_limit(p.field_b)?,
        })
    }
}
