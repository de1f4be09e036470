use ocp_chaos::ocp_model::{
    direct_sum_energy, direct_sum_field, ewald_energy, ewald_field, EwaldConfig, ParticleSystem,
};
use ocp_chaos::vec3::Vec3;

fn rms(a: &[Vec3], b: &[Vec3]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (0..3).map(|k| (x[k] - y[k]).powi(2)).sum::<f64>())
        .sum();
    (s / a.len() as f64).sqrt()
}

#[test]
fn image_sum_converges_between_six_and_eight_shells() {
    let sys = ParticleSystem::random(64, 11).unwrap();
    let six = direct_sum_field(&sys, 6).unwrap();
    let eight = direct_sum_field(&sys, 8).unwrap();
    let step = rms(&six, &eight);
    assert!(step < 1e-6, "{step:e}");
}

#[test]
fn ewald_field_matches_image_sum() {
    for seed in [11, 12] {
        let sys = ParticleSystem::random(64, seed).unwrap();
        let cfg = EwaldConfig::default_for(64).unwrap();
        let err = rms(&ewald_field(&sys, &cfg).unwrap(), &direct_sum_field(&sys, 6).unwrap());
        assert!(err < 1e-5, "seed {seed}: {err:e}");
    }
}

#[test]
fn ewald_energy_matches_image_sum() {
    for seed in [11, 12] {
        let sys = ParticleSystem::random(64, seed).unwrap();
        let cfg = EwaldConfig::default_for(64).unwrap();
        let u = ewald_energy(&sys, &cfg).unwrap();
        let d = direct_sum_energy(&sys, 6).unwrap();
        assert!(((u - d) / d).abs() < 1e-5, "seed {seed}: {u} vs {d}");
    }
}

#[test]
fn image_sum_gives_lattice_energies() {
    // Madelung energies per particle in Wigner-Seitz units.
    for (sys, madelung) in [
        (ParticleSystem::bcc(2).unwrap(), -0.895_929_255_7),
        (ParticleSystem::simple_cubic(2).unwrap(), -0.880_059_442_1),
    ] {
        let u = direct_sum_energy(&sys, 6).unwrap();
        assert!((u - madelung).abs() < 1e-6, "{u}");
    }
}

#[test]
fn off_centre_single_charge_matches_lattice() {
    // One charge per cell is a simple cubic lattice wherever it sits.
    let l = ocp_chaos::ocp_model::box_length_for(1);
    let sys = ParticleSystem::at_rest(vec![[0.1 * l, 0.8 * l, 0.35 * l]], 0).unwrap();
    let u = direct_sum_energy(&sys, 6).unwrap();
    assert!((u + 0.880_059_442_1).abs() < 1e-6, "{u}");
    let e = direct_sum_field(&sys, 6).unwrap();
    assert!(rms(&e, &[[0.0; 3]]) < 1e-6, "{e:?}");
}
