use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use ocp_chaos::dynamics::{self, recommended_dt, IntegratorConfig, Thermostat};
use ocp_chaos::machines::{self, DEFAULT_B_RANGE};
use ocp_chaos::observables::{self, EpsilonReport};
use ocp_chaos::ocp_model::EwaldConfig;
use ocp_chaos::params::{PlasmaParams, Prediction, Temperature, DEFAULT_DENSITY, DEFAULT_PARTICLES, DEFAULT_TEMPERATURE_EV};
use ocp_chaos::sampler::{self, ChainConfig, HistogramBin, DEFAULT_SWEEPS};
use ocp_chaos::sweep::{self, SweepConfig};
use ocp_chaos::vec3::Vec3;

use crate::config::{positive, required, Config};
use crate::CliError;

pub fn dispatch(mut cfg: Config) -> Result<(), CliError> {
    let dir = cfg.output_dir();
    cfg.output_dir = Some(dir.clone());
    cfg.seed = Some(cfg.seed());
    cfg.log_level = Some(cfg.log_level());
    let run: fn(&mut Config, &Path) -> Result<(), CliError> = match cfg.command.as_deref() {
        Some("predict") => predict,
        Some("microfield") => microfield,
        Some("simulate") => simulate,
        Some("sweep") => sweep,
        Some("figure") => figure,
        other => return Err(CliError::Validation(format!("unknown subcommand {other:?}"))),
    };
    fs::create_dir_all(&dir).map_err(CliError::io)?;
    run(&mut cfg, &dir)?;
    cfg.write(&dir)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(CliError::io)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    Ok(BufWriter::new(fs::File::create(path).map_err(CliError::io)?))
}

fn at_least(v: usize, min: usize, flag: &str) -> Result<usize, CliError> {
    if v >= min {
        Ok(v)
    } else {
        Err(CliError::Validation(format!("--{flag} must be at least {min}, got {v}")))
    }
}

fn predict(cfg: &mut Config, dir: &Path) -> Result<(), CliError> {
    let b = positive(required(&cfg.field_b, "B")?, "B")?;
    let n = positive(*cfg.n.get_or_insert(DEFAULT_DENSITY), "n")?;
    let t_text = cfg.temperature.get_or_insert_with(|| format!("{DEFAULT_TEMPERATURE_EV} eV")).clone();
    let t = Temperature::parse(&t_text).map_err(|e| CliError::Validation(format!("--T: {e}")))?;
    let p = Prediction::evaluate(&PlasmaParams::new(n, t, b)?)?;
    write_json(&p, &dir.join("predict.json"))?;
    println!("{}", serde_json::to_string_pretty(&p).map_err(|e| CliError::Runtime(e.to_string()))?);
    Ok(())
}

#[derive(Serialize)]
struct MicrofieldReport {
    gamma: f64,
    #[serde(rename = "N")]
    particles: usize,
    variance_total: f64,
    predicted_3_over_gamma: f64,
    ratio: f64,
    stderr: f64,
    pass: bool,
    variance_transverse: f64,
    transverse_fraction: f64,
    mean_field: Vec3,
    sample_count: usize,
    configurations: usize,
    acceptance: f64,
    record_stride: usize,
    warnings: Vec<String>,
    histogram: Vec<HistogramBin>,
}

fn microfield(cfg: &mut Config, dir: &Path) -> Result<(), CliError> {
    let gamma = positive(required(&cfg.gamma, "gamma")?, "gamma")?;
    let particles = at_least(*cfg.particles.get_or_insert(DEFAULT_PARTICLES), sampler::MIN_PARTICLES, "particles")?;
    let sweeps = at_least(*cfg.sweeps.get_or_insert(DEFAULT_SWEEPS), 1, "sweeps")?;
    let dump = *cfg.dump_configs.get_or_insert(false);

    let chain = sampler::run_chain(&ChainConfig::new(gamma, particles, sweeps, cfg.seed()))?;
    for w in &chain.warnings {
        log::warn!("{w}");
    }
    let stats = sampler::microfield_stats(&chain.configs, &EwaldConfig::default_for(particles)?)?;
    let ilm = sampler::ilm_check(&stats, gamma)?;
    let report = MicrofieldReport {
        gamma,
        particles,
        variance_total: stats.variance_total,
        predicted_3_over_gamma: ilm.predicted,
        ratio: ilm.ratio,
        stderr: ilm.stderr,
        pass: ilm.pass,
        variance_transverse: stats.variance_transverse,
        transverse_fraction: stats.variance_transverse / stats.variance_total,
        mean_field: stats.mean_field,
        sample_count: stats.sample_count,
        configurations: chain.configs.len(),
        acceptance: chain.acceptance,
        record_stride: chain.record_stride,
        warnings: chain.warnings.clone(),
        histogram: stats.histogram.clone(),
    };
    write_json(&report, &dir.join("microfield.json"))?;
    if dump {
        let cdir = dir.join("configs");
        fs::create_dir_all(&cdir).map_err(CliError::io)?;
        for (i, c) in chain.configs.iter().enumerate() {
            c.write_text(create(&cdir.join(format!("config_{i:05}.ocp")))?)?;
        }
    }
    println!(
        "variance_total {:.6} vs 3/gamma {:.6} (ratio {:.4} ± {:.4})",
        report.variance_total,
        report.predicted_3_over_gamma,
        report.ratio,
        report.stderr / report.predicted_3_over_gamma
    );
    Ok(())
}

/// Smallest record stride that divides `steps` and keeps at most `max_records` records.
fn stride_for(steps: usize, max_records: usize) -> usize {
    let min = steps.div_ceil(max_records.saturating_sub(1).max(1)).max(1);
    (min..=steps).find(|s| steps % s == 0).unwrap_or(steps)
}

fn simulate(cfg: &mut Config, dir: &Path) -> Result<(), CliError> {
    let gamma = positive(required(&cfg.gamma, "gamma")?, "gamma")?;
    let beta = positive(required(&cfg.beta, "beta")?, "beta")?;
    let particles = at_least(*cfg.particles.get_or_insert(DEFAULT_PARTICLES), sampler::MIN_PARTICLES, "particles")?;
    let defaults = SweepConfig::new(gamma, vec![beta], particles, cfg.seed());
    let steps = at_least(*cfg.steps.get_or_insert(defaults.steps), 2, "steps")?;
    let dt = positive(*cfg.dt.get_or_insert_with(|| recommended_dt(beta, gamma)), "dt")?;
    let sweeps = at_least(*cfg.metropolis_sweeps.get_or_insert(defaults.metropolis_sweeps), 1, "metropolis-sweeps")?;
    let eq_steps = *cfg.equilibration_steps.get_or_insert(defaults.equilibration_steps);
    let max_lag = positive(*cfg.max_lag.get_or_insert(0.5 * steps as f64 * dt), "max-lag")?;

    let prod = IntegratorConfig {
        dt,
        steps,
        record_stride: stride_for(steps, defaults.max_records),
        beta,
        gamma,
        thermostat: Thermostat::Off,
        ewald: None,
    };
    prod.validate().map_err(|e| CliError::Validation(format!("--dt/--steps: {e}")))?;

    let mut sys = sampler::metropolis_positions(gamma, particles, sweeps, cfg.seed())?;
    sys.set_velocities(sampler::sample_velocities(particles, cfg.seed())?)?;
    let mut force = dynamics::EwaldForce::new(&prod, particles)?;
    if eq_steps > 0 {
        let eq = IntegratorConfig {
            steps: eq_steps,
            record_stride: 1,
            thermostat: Thermostat::VelocityRescale { every: defaults.thermostat_every },
            ..prod
        };
        sys = dynamics::equilibrate_with(&sys, &eq, &mut force)?.0;
    }
    let (_, traj) = dynamics::run_nve_with(&sys, &prod, &mut force)?;
    if traj.meta.energy_drift_flag {
        log::warn!("relative energy drift {:.3e} exceeds {:.0e}", traj.meta.energy_drift, dynamics::ENERGY_DRIFT_LIMIT);
    }
    traj.save(&dir.join("trajectory.csv"), &dir.join("trajectory.json"))?;

    let (eps, corr) = observables::analyze_trajectory(&traj, max_lag, cfg.seed())?;
    EpsilonReport::new(&eps, &corr).save(&dir.join("epsilon.json"))?;
    let mut w = create(&dir.join("correlation.csv"))?;
    observables::write_correlation_csv(&corr, eps.epsilon_eq6, beta, &mut w)?;
    w.flush().map_err(CliError::io)?;
    let bound = observables::shorttime_bound_check(&corr, eps.epsilon_eq6, beta);
    write_json(&bound, &dir.join("bound.json"))?;

    println!(
        "epsilon {:.6} (predicted {:.6}); decorrelation {}; bound {}; energy drift {:.2e}",
        eps.epsilon_eq6,
        sweep::epsilon_predicted(beta),
        corr.gyroperiods_to_decorrelate.map_or("not reached".into(), |g| format!("{g:.3} gyroperiods")),
        if bound.pass { "respected" } else { "violated" },
        traj.meta.energy_drift
    );
    Ok(())
}

fn sweep(cfg: &mut Config, dir: &Path) -> Result<(), CliError> {
    let gamma = positive(required(&cfg.gamma, "gamma")?, "gamma")?;
    let betas = required(&cfg.betas, "betas")?;
    if betas.is_empty() {
        return Err(CliError::Validation("--betas must list at least one value".into()));
    }
    for &b in &betas {
        positive(b, "betas")?;
    }
    let particles = at_least(*cfg.particles.get_or_insert(DEFAULT_PARTICLES), sampler::MIN_PARTICLES, "particles")?;
    let mut sc = SweepConfig::new(gamma, betas, particles, cfg.seed());
    sc.jobs = cfg.jobs;
    sc.steps = at_least(*cfg.steps.get_or_insert(sc.steps), 1, "steps")?;
    if let Some(dt) = cfg.dt {
        sc.dt = Some(positive(dt, "dt")?);
    }
    sc.min_gyroperiods = *cfg.min_gyroperiods.get_or_insert(sc.min_gyroperiods);
    if !(sc.min_gyroperiods >= 0.0) {
        return Err(CliError::Validation("--min-gyroperiods must be non-negative".into()));
    }
    sc.metropolis_sweeps = at_least(*cfg.metropolis_sweeps.get_or_insert(sc.metropolis_sweeps), 1, "metropolis-sweeps")?;
    sc.equilibration_steps = *cfg.equilibration_steps.get_or_insert(sc.equilibration_steps);
    sc.divergence_steps = *cfg.divergence_steps.get_or_insert(sc.divergence_steps);

    let result = sweep::run_sweep(&sc)?;
    for d in &result.diagnostics {
        log::warn!("{d}");
    }
    result.save(dir)?;
    let report = result.threshold_report();
    match report.located_threshold_beta.beta() {
        Some(b) => println!("threshold beta {b:.4} (conjectured {:.4})", report.conjectured_threshold_beta),
        None => println!("threshold not bracketed (conjectured {:.4})", report.conjectured_threshold_beta),
    }
    Ok(())
}

fn figure(cfg: &mut Config, dir: &Path) -> Result<(), CliError> {
    let b_min = positive(*cfg.b_min.get_or_insert(DEFAULT_B_RANGE[0]), "b-min")?;
    let b_max = positive(*cfg.b_max.get_or_insert(DEFAULT_B_RANGE[1]), "b-max")?;
    if b_min >= b_max {
        return Err(CliError::Validation(format!("--b-min ({b_min}) must be below --b-max ({b_max})")));
    }
    let records = match &cfg.records {
        Some(p) => {
            let file = fs::File::open(p).map_err(|e| CliError::Validation(format!("--records {}: {e}", p.display())))?;
            let loaded = machines::parse_records(file)
                .map_err(|e| CliError::Validation(format!("--records {}: {e}", p.display())))?;
            for w in &loaded.warnings {
                log::warn!("{w}");
            }
            loaded.records
        }
        None => Vec::new(),
    };
    machines::export_figure(&records, [b_min, b_max], &dir.join("figure.svg"))?;
    let res = machines::residuals(&records)?;
    machines::write_residuals(&res, create(&dir.join("residuals.csv"))?)?;
    println!("{} records, figure.svg and residuals.csv written", records.len());
    Ok(())
}
