use std::f64::consts::PI;

use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use ocp_chaos::dynamics::{run_nve, EwaldForce, IntegratorConfig, ZeroField};
use ocp_chaos::observables::*;
use ocp_chaos::ocp_model::ParticleSystem;
use ocp_chaos::rng;
use ocp_chaos::sampler::{metropolis_positions, sample_velocities};
use ocp_chaos::stats;
use ocp_chaos::Error;

fn thermal(gamma: f64, n: usize, seed: u64) -> ParticleSystem {
    let mut sys = metropolis_positions(gamma, n, 200, seed).unwrap();
    sys.set_velocities(sample_velocities(n, seed).unwrap()).unwrap();
    sys
}

fn vector_variance(xs: &[[f64; 2]]) -> f64 {
    (0..2).map(|k| stats::variance(&xs.iter().map(|x| x[k]).collect::<Vec<_>>())).sum()
}

#[test]
fn isotropic_sample_identities() {
    let s = 0.7;
    let (v, e) = synthetic_isotropic(1_000_000, s, 2024);
    let sigma2_v = vector_variance(&v);
    let sigma2_e = vector_variance(&e);
    let ve: Vec<f64> = v.iter().zip(&e).map(|(a, b)| a[0] * b[0] + a[1] * b[1]).collect();
    let v2: Vec<f64> = v.iter().map(|a| a[0] * a[0] + a[1] * a[1]).collect();
    assert!((stats::variance(&ve) / (0.5 * sigma2_v * sigma2_e) - 1.0).abs() < 0.01);
    assert!((sigma2_v / 2.0 - 1.0).abs() < 0.01);
    assert!((stats::variance(&v2) / 4.0 - 1.0).abs() < 0.02);

    let beta = 1.7;
    let eps = epsilon_from_samples(&v, &e, beta).unwrap();
    assert!(((eps.epsilon_eq6 - eps.epsilon_eq8) / eps.epsilon_eq6).abs() < 1e-12);
    // σ_{v·E} = sqrt(½·2·2s²) and σ_{v²} = 2, so ε = sqrt(2)·s/β.
    let closed = 2f64.sqrt() * s / beta;
    assert!((eps.epsilon_eq6 / closed - 1.0).abs() < 0.01, "{eps:?}");
}

#[test]
fn transverse_share_of_field_variance() {
    let mut r = rng::stream_rng(5, rng::STREAM_SYNTHETIC);
    let fields: Vec<[f64; 3]> =
        (0..1_000_000).map(|_| std::array::from_fn(|_| 1.3 * r.sample::<f64, _>(StandardNormal))).collect();
    let var = |k: usize| stats::variance(&fields.iter().map(|f| f[k]).collect::<Vec<_>>());
    let total = var(0) + var(1) + var(2);
    let transverse = var(0) + var(1);
    assert!((transverse / total / (2.0 / 3.0) - 1.0).abs() < 0.01);
}

#[test]
fn epsilon_edge_cases() {
    let (v, e) = synthetic_isotropic(10_000, 1.0, 8);
    let zero = vec![[0.0; 2]; v.len()];
    let eps = epsilon_from_samples(&v, &zero, 2.0).unwrap();
    assert_eq!(eps.epsilon_eq6, 0.0);
    assert_eq!(eps.epsilon_eq8, 0.0);
    assert!(matches!(epsilon_from_samples(&v, &e, 0.0), Err(Error::Domain(_))));
    assert!(epsilon_from_samples(&v[..10], &e, 1.0).is_err());
}

proptest! {
    #[test]
    fn epsilon_forms_agree_and_scale(beta in 0.05f64..20.0, c in 0.01f64..100.0, seed in 0u64..1000) {
        let (v, e) = synthetic_isotropic(2000, 0.5, seed);
        let a = epsilon_from_samples(&v, &e, beta).unwrap();
        prop_assert!(((a.epsilon_eq6 - a.epsilon_eq8) / a.epsilon_eq6).abs() < 1e-12);
        let scaled: Vec<[f64; 2]> = e.iter().map(|x| [c * x[0], c * x[1]]).collect();
        let b = epsilon_from_samples(&v, &scaled, beta).unwrap();
        prop_assert!((b.epsilon_eq6 / (c * a.epsilon_eq6) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invariant_is_non_negative(vx in -10.0f64..10.0, vy in -10.0f64..10.0, beta in 1e-3f64..1e3) {
        let l = angular_momentum_l([vx, vy], beta).unwrap();
        prop_assert!(l >= 0.0);
        prop_assert!((l * beta - (vx * vx + vy * vy)).abs() <= 1e-12 * (1.0 + vx * vx + vy * vy));
    }
}

fn ar1(particles: usize, len: usize, phi: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::rng_from_seed(seed);
    (0..particles)
        .map(|_| {
            let mut x = 0.0;
            (0..len)
                .map(|_| {
                    x = phi * x + r.sample::<f64, _>(StandardNormal);
                    x + 3.0
                })
                .collect()
        })
        .collect()
}

#[test]
fn random_phase_cosines() {
    let (omega, dt) = (2.0, 0.05);
    let mut r = rng::rng_from_seed(3);
    let series: Vec<Vec<f64>> = (0..200)
        .map(|_| {
            let phase = r.random_range(0.0..2.0 * PI);
            (0..2000).map(|k| (omega * k as f64 * dt + phase).cos()).collect()
        })
        .collect();
    let corr = autocorrelation(&series, dt, 10.0, 1).unwrap();
    for (t, c) in corr.lags.iter().zip(&corr.normalized_correlation) {
        assert!((c - (omega * t).cos()).abs() < 0.02, "{t} {c}");
    }
}

#[test]
fn white_noise_is_uncorrelated() {
    let series = ar1(50, 400, 0.0, 4);
    let corr = autocorrelation(&series, 1.0, 50.0, 2).unwrap();
    let samples = (50 * 400) as f64;
    assert_eq!(corr.normalized_correlation[0], 1.0);
    for c in &corr.normalized_correlation[1..] {
        assert!(c.abs() < 3.0 / samples.sqrt(), "{c}");
    }
}

#[test]
fn correlation_matches_increment_identity() {
    let series = ar1(20, 500, 0.9, 6);
    let corr = autocorrelation(&series, 0.1, 20.0, 3).unwrap();
    for k in [0, 1, 5, 37, 200] {
        let c = corr.normalized_correlation[k] * corr.sigma2_l;
        let rhs = windowed_variance(&series, k) - 0.5 * mean_square_increment(&series, k);
        assert!(((c - rhs) / corr.sigma2_l).abs() < 1e-10, "lag {k}: {c} vs {rhs}");
    }
    assert!((windowed_variance(&series, 0) / corr.sigma2_l - 1.0).abs() < 1e-12);
    for (c, se) in corr.normalized_correlation.iter().zip(&corr.stderr) {
        assert!(c.abs() <= 1.0 + 3.0 * se);
    }
}

#[test]
fn lag_limits() {
    let series = ar1(4, 101, 0.5, 7);
    assert!(autocorrelation(&series, 0.1, 5.0, 0).is_ok());
    assert!(matches!(autocorrelation(&series, 0.1, 5.5, 0), Err(Error::Input(_))));
    assert!(matches!(autocorrelation(&[vec![1.0]], 0.1, 0.0, 0), Err(Error::Input(_))));
}

#[test]
fn finite_difference_of_invariant() {
    let mut cfg = IntegratorConfig::new(2.0, 1.0, 400);
    cfg.dt = 0.005;
    let (_, rec) = run_nve(&thermal(1.0, 16, 2), &cfg).unwrap();
    let l = l_series(&rec).unwrap();
    let ld = l_dot_series(&rec).unwrap();
    let (mut err, mut norm) = (0.0, 0.0);
    for (lj, dj) in l.iter().zip(&ld) {
        for t in 1..lj.len() - 1 {
            let fd = (lj[t + 1] - lj[t - 1]) / (2.0 * cfg.dt);
            err += (fd - dj[t]).powi(2);
            norm += dj[t].powi(2);
        }
    }
    assert!((err / norm).sqrt() < cfg.dt, "{}", (err / norm).sqrt());
}

#[test]
fn invariant_derivative_averages_to_zero() {
    let mut cfg = IntegratorConfig::new(1.0, 1.0, 5000);
    cfg.dt = 0.02;
    cfg.record_stride = 5;
    let (_, rec) = run_nve(&thermal(1.0, 64, 14), &cfg).unwrap();
    let ld = l_dot_series(&rec).unwrap();
    let per_time: Vec<f64> = (0..rec.len()).map(|t| ld.iter().map(|p| p[t]).sum::<f64>() / ld.len() as f64).collect();
    let se = stats::block_stderr(&stats::block_means(&per_time, 20));
    assert!(stats::mean(&per_time).abs() < 3.0 * se, "{} ± {se}", stats::mean(&per_time));
}

#[test]
fn weak_coupling_run_respects_short_time_bound() {
    let beta = 3.0;
    let mut cfg = IntegratorConfig::new(beta, 0.1, 6000);
    cfg.dt = 0.001;
    cfg.record_stride = 10;
    let (_, rec) = run_nve(&thermal(0.1, 64, 10), &cfg).unwrap();
    let eps = epsilon_measured(&rec).unwrap();
    let dt_rec = cfg.dt * cfg.record_stride as f64;
    let corr = with_decorrelation(autocorrelation(&l_series(&rec).unwrap(), dt_rec, 3.0, 10).unwrap(), beta);
    let abs = shorttime_bound_check_abs(&corr, eps.epsilon_eq6, beta, 0.02);
    assert!(abs.pass, "{abs:?}");
    let boot = shorttime_bound_check(&corr, eps.epsilon_eq6, beta);
    assert!(boot.pass, "{boot:?}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("correlation.csv");
    write_correlation_csv(&corr, eps.epsilon_eq6, beta, std::fs::File::create(&path).unwrap()).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("lag,normalized_C,bound_rhs\n0,1,1\n"));
    assert_eq!(text.lines().count(), corr.lags.len() + 1);
    let json = dir.path().join("epsilon.json");
    EpsilonReport::new(&eps, &corr).save(&json).unwrap();
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    for key in ["sigma2_L", "sigma2_Ldot", "epsilon_eq6", "epsilon_eq8", "decorrelation_time", "gyroperiods"] {
        assert!(value.get(key).is_some(), "{key}");
    }
}

#[test]
fn twin_trajectories_without_field_do_not_separate() {
    let mut sys = ParticleSystem::random(16, 3).unwrap();
    sys.set_velocities(sample_velocities(16, 3).unwrap()).unwrap();
    let mut cfg = IntegratorConfig::new(1.0, 1.0, 4000);
    cfg.dt = 0.025;
    let r = trajectory_divergence(&sys, &cfg, 1e-8, 40, &mut ZeroField).unwrap();
    assert!(r.rate < 0.05, "{r:?}");
    let same = trajectory_divergence(&sys, &cfg, 0.0, 40, &mut ZeroField).unwrap();
    assert_eq!(same.rate, 0.0);
    assert!(matches!(trajectory_divergence(&sys, &cfg, 1e-5, 40, &mut ZeroField), Err(Error::Domain(_))));
}

#[test]
fn weak_coupling_divergence_is_positive_and_converged() {
    let sys = thermal(0.1, 64, 3);
    let mut cfg = IntegratorConfig::new(0.3, 0.1, 6000);
    cfg.dt = 0.001;
    let mut force = EwaldForce::new(&cfg, 64).unwrap();
    let coarse = trajectory_divergence(&sys, &cfg, 1e-8, 50, &mut force).unwrap();
    let fine_cfg = IntegratorConfig { dt: 0.0005, steps: 12_000, ..cfg };
    let fine = trajectory_divergence(&sys, &fine_cfg, 1e-8, 100, &mut force).unwrap();
    assert!(coarse.rate > 0.0);
    assert!((coarse.rate / fine.rate - 1.0).abs() < 0.2, "{coarse:?} {fine:?}");
}
