//! Brute-force periodic image sums, used as an Ewald-free oracle in tests.
//!
//! Each periodic copy of the cell is made neutral by pairing its charges with
//! a uniformly charged cube, whose potential and field are evaluated in
//! closed form. Cells are added in complete shells `|n|² = const` and the
//! outer shells are damped by a smooth radial weight, which removes most of
//! the noise from the jagged edge of the summation region. Any radial weight
//! with unit value at the origin converges to the spherical (vacuum-boundary)
//! limit; the analytic surface terms are then removed to obtain the tin-foil
//! values Ewald returns.

use std::f64::consts::PI;

use super::ParticleSystem;
use crate::vec3::{self, Vec3};
use crate::{Error, Result};

/// Largest system the direct sums accept.
pub const DIRECT_SUM_MAX_PARTICLES: usize = 256;

/// `ln(a + r)` with `r = sqrt(a² + b²)`, stable for `a ≪ 0`.
fn ln_a_plus_r(a: f64, r: f64, rest2: f64) -> f64 {
    if a >= 0.0 {
        (a + r).ln()
    } else {
        (rest2 / (r - a)).ln()
    }
}

/// Antiderivative of `1/r` in all three coordinates.
fn potential_kernel(u: f64, v: f64, w: f64) -> f64 {
    let (u2, v2, w2) = (u * u, v * v, w * w);
    let r = (u2 + v2 + w2).sqrt();
    let mut t = 0.0;
    if v * w != 0.0 {
        t += v * w * ln_a_plus_r(u, r, v2 + w2);
    }
    if u * w != 0.0 {
        t += u * w * ln_a_plus_r(v, r, u2 + w2);
    }
    if u * v != 0.0 {
        t += u * v * ln_a_plus_r(w, r, u2 + v2);
    }
    if u != 0.0 && v * w != 0.0 {
        t -= 0.5 * u2 * (v * w / (u * r)).atan();
    }
    if v != 0.0 && u * w != 0.0 {
        t -= 0.5 * v2 * (u * w / (v * r)).atan();
    }
    if w != 0.0 && u * v != 0.0 {
        t -= 0.5 * w2 * (u * v / (w * r)).atan();
    }
    t
}

/// Antiderivative of `1/r` in `v` and `w`: the field component along `u`.
fn field_kernel(u: f64, v: f64, w: f64) -> f64 {
    let (u2, v2, w2) = (u * u, v * v, w * w);
    let r = (u2 + v2 + w2).sqrt();
    let mut t = 0.0;
    if v != 0.0 {
        t += v * ln_a_plus_r(w, r, u2 + v2);
    }
    if w != 0.0 {
        t += w * ln_a_plus_r(v, r, u2 + w2);
    }
    if u != 0.0 && v * w != 0.0 {
        t -= u * (v * w / (u * r)).atan();
    }
    t
}

fn corners(p: Vec3, lo: Vec3, side: f64) -> [[(f64, f64); 2]; 3] {
    let mut c = [[(0.0, 0.0); 2]; 3];
    for d in 0..3 {
        c[d] = [(lo[d] - p[d], -1.0), (lo[d] + side - p[d], 1.0)];
    }
    c
}

/// Potential at `p` of the cube `[lo, lo + side]³` with unit charge density.
pub fn cube_potential(p: Vec3, lo: Vec3, side: f64) -> f64 {
    let c = corners(p, lo, side);
    let mut phi = 0.0;
    for &(u, su) in &c[0] {
        for &(v, sv) in &c[1] {
            for &(w, sw) in &c[2] {
                phi += su * sv * sw * potential_kernel(u, v, w);
            }
        }
    }
    phi
}

/// Field at `p` of the cube `[lo, lo + side]³` with unit charge density.
pub fn cube_field(p: Vec3, lo: Vec3, side: f64) -> Vec3 {
    let c = corners(p, lo, side);
    let mut e = [0.0; 3];
    for &(u, su) in &c[0] {
        for &(v, sv) in &c[1] {
            for &(w, sw) in &c[2] {
                let s = su * sv * sw;
                e[0] += s * field_kernel(u, v, w);
                e[1] += s * field_kernel(v, w, u);
                e[2] += s * field_kernel(w, u, v);
            }
        }
    }
    e
}

/// Smooth radial taper: 1 up to `x = 1`, 0 from `x = 2`.
fn taper(x: f64) -> f64 {
    if x <= 1.0 {
        1.0
    } else if x >= 2.0 {
        0.0
    } else {
        let t = x - 1.0;
        let bump = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
        bump(1.0 - t) / (bump(1.0 - t) + bump(t))
    }
}

/// Weighted integer image vectors, ordered by shell: full weight for
/// `|n| ≤ shells`, smoothly tapered to zero at `|n| = 2 shells`.
fn image_vectors(shells: usize) -> Vec<([i32; 3], f64)> {
    let s = 2 * shells as i32;
    let mut v = Vec::new();
    for x in -s..=s {
        for y in -s..=s {
            for z in -s..=s {
                let r2 = x * x + y * y + z * z;
                let w = taper((r2 as f64).sqrt() / shells as f64);
                if w > 0.0 {
                    v.push(([x, y, z], w));
                }
            }
        }
    }
    v.sort_by_key(|(n, _)| (n[0] * n[0] + n[1] * n[1] + n[2] * n[2], *n));
    v
}

fn check(sys: &ParticleSystem, shells: usize) -> Result<()> {
    if sys.len() > DIRECT_SUM_MAX_PARTICLES {
        return Err(Error::Refused(format!(
            "direct image sum limited to {DIRECT_SUM_MAX_PARTICLES} particles, got {}",
            sys.len()
        )));
    }
    if shells < 1 {
        return Err(Error::Input("need at least one image shell".into()));
    }
    Ok(())
}

/// Cell dipole including the background, about the cell centre.
fn cell_dipole(sys: &ParticleSystem) -> Vec3 {
    let c = 0.5 * sys.box_length();
    sys.positions().iter().fold([0.0; 3], |m, p| vec3::add(m, [p[0] - c, p[1] - c, p[2] - c]))
}

/// Microfield at every particle by explicit summation over periodic images,
/// converted to tin-foil boundary conditions.
pub fn direct_sum_field(sys: &ParticleSystem, image_shells: usize) -> Result<Vec<Vec3>> {
    check(sys, image_shells)?;
    let l = sys.box_length();
    let n = sys.len();
    let rho = n as f64 / sys.volume();
    let images = image_vectors(image_shells);
    let surface = vec3::scale(cell_dipole(sys), 4.0 * PI / (3.0 * sys.volume()));
    let pos = sys.positions();
    Ok((0..n)
        .map(|i| {
            let mut e = [0.0; 3];
            for (img, weight) in &images {
                let shift = [img[0] as f64 * l, img[1] as f64 * l, img[2] as f64 * l];
                let mut cell = [0.0; 3];
                for (j, pj) in pos.iter().enumerate() {
                    if j == i && *img == [0, 0, 0] {
                        continue;
                    }
                    let d = vec3::sub(pos[i], vec3::add(*pj, shift));
                    let r2 = vec3::norm2(d);
                    cell = vec3::add(cell, vec3::scale(d, 1.0 / (r2 * r2.sqrt())));
                }
                let bg = cube_field(pos[i], shift, l);
                e = vec3::add(e, vec3::scale(vec3::sub(cell, vec3::scale(bg, rho)), *weight));
            }
            vec3::add(e, surface)
        })
        .collect())
}

/// Potential energy per particle by explicit summation over periodic images,
/// converted to tin-foil boundary conditions.
pub fn direct_sum_energy(sys: &ParticleSystem, image_shells: usize) -> Result<f64> {
    check(sys, image_shells)?;
    let l = sys.box_length();
    let n = sys.len();
    let volume = sys.volume();
    let rho = n as f64 / volume;
    let images = image_vectors(image_shells);
    let c = 0.5 * l;
    let dipole = cell_dipole(sys);
    let second_moment = sys
        .positions()
        .iter()
        .map(|p| vec3::norm2([p[0] - c, p[1] - c, p[2] - c]))
        .sum::<f64>()
        - n as f64 * l * l / 4.0;
    let pos = sys.positions();
    let mut total = 0.0;
    for i in 0..n {
        let mut phi = 0.0;
        for (img, weight) in &images {
            let shift = [img[0] as f64 * l, img[1] as f64 * l, img[2] as f64 * l];
            let mut cell = 0.0;
            for (j, pj) in pos.iter().enumerate() {
                if j == i && *img == [0, 0, 0] {
                    continue;
                }
                cell += 1.0 / vec3::norm(vec3::sub(pos[i], vec3::add(*pj, shift)));
            }
            phi += weight * (cell - rho * cube_potential(pos[i], shift, l));
        }
        let rel = [pos[i][0] - c, pos[i][1] - c, pos[i][2] - c];
        phi += -4.0 * PI / (3.0 * volume) * vec3::dot(dipole, rel) + 2.0 * PI / (3.0 * volume) * second_moment;
        total += 0.5 * phi;
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Midpoint quadrature of a unit cube, an independent check of the closed forms.
    fn quadrature(p: Vec3) -> (f64, Vec3) {
        let m = 60;
        let h = 1.0 / m as f64;
        let (mut phi, mut e) = (0.0, [0.0; 3]);
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    let s = [(a as f64 + 0.5) * h, (b as f64 + 0.5) * h, (c as f64 + 0.5) * h];
                    let d = vec3::sub(p, s);
                    let r = vec3::norm(d);
                    phi += h * h * h / r;
                    e = vec3::add(e, vec3::scale(d, h * h * h / (r * r * r)));
                }
            }
        }
        (phi, e)
    }

    #[test]
    fn cube_closed_forms_match_quadrature() {
        for p in [[3.0, 0.2, -1.5], [1.5, 0.5, 0.5], [-0.7, 2.1, 0.4]] {
            let (phi, e) = quadrature(p);
            assert!((cube_potential(p, [0.0; 3], 1.0) - phi).abs() < 1e-4 * phi.abs());
            let f = cube_field(p, [0.0; 3], 1.0);
            for d in 0..3 {
                assert!((f[d] - e[d]).abs() < 1e-4 * vec3::norm(e), "{p:?} {f:?} {e:?}");
            }
        }
    }

    #[test]
    fn cube_far_field_is_point_charge() {
        let p = [40.0, -25.0, 31.0];
        let c = [0.5, 0.5, 0.5];
        let d = vec3::sub(p, c);
        let r = vec3::norm(d);
        assert!((cube_potential(p, [0.0; 3], 1.0) * r - 1.0).abs() < 1e-6);
        let f = cube_field(p, [0.0; 3], 1.0);
        assert!(vec3::norm(vec3::sub(f, vec3::scale(d, 1.0 / (r * r * r)))) < 1e-9);
    }

    #[test]
    fn guard_refuses_large_systems() {
        let sys = ParticleSystem::random(300, 1).unwrap();
        assert!(matches!(direct_sum_field(&sys, 2), Err(Error::Refused(_))));
        let small = ParticleSystem::random(4, 1).unwrap();
        assert!(direct_sum_field(&small, 0).is_err());
    }

    #[test]
    fn symmetric_pair_has_opposite_fields() {
        let l = super::super::box_length_for(2);
        let sys = ParticleSystem::at_rest(vec![[0.3 * l, 0.5 * l, 0.5 * l], [0.7 * l, 0.5 * l, 0.5 * l]], 0).unwrap();
        let e = direct_sum_field(&sys, 4).unwrap();
        for d in 0..3 {
            assert!((e[0][d] + e[1][d]).abs() < 1e-12, "{e:?}");
        }
    }
}
