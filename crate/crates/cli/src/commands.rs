//! One function per subcommand. Each validates, computes, and only then
//! writes its files.

use std::path::PathBuf;
use std::sync::atomic::AtomicBool;

use minea_ergo::measure::{
    dual_basin_experiment, ks_critical_one_sample, ks_distance, phase_scan_with_cancel, PhaseScanConfig,
    UNIQUE_KS_ALPHA,
};
use minea_ergo::minea::{drift, StationaryBranch};
use minea_ergo::noise::ou_stationary_law;
use minea_ergo::spectral::{
    bilinear_b, eigenmode_consistency, identity_suite, small_noise_convergence, SpectralField, SMALL_NOISE_GATE,
};
use minea_ergo::{
    make_stream, ou_step, simulate as simulate_path, stationary_points as enumerate_stationary, uniqueness_regime,
    EmpiricalMeasure1D, Error, State3, Verdict,
};
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::output::{fmt_f64, output_path, to_json, write_file, Csv};
use crate::CliError;

/// Relative tolerance on the bilinear identities.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;
/// Off-mode energy allowed when starting on the forced eigenmode.
pub const OFFMODE_TOLERANCE: f64 = 1e-12;
/// Allowed forced-amplitude deviation from the OU path, in units of `dt`.
pub const CONSISTENCY_DT_FACTOR: f64 = 5.0;

/// Auxiliary stream indices for nse-verify, far from trajectory indices.
const AUX_STREAM: u64 = 1 << 40;

/// Options shared by every subcommand after the config has been loaded.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub seed: u64,
    pub prefix: String,
    pub expect_separation: bool,
}

/// Files written and, for verification commands, the reason the check failed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub failure: Option<String>,
    pub interrupted: bool,
}

fn core_err(e: Error) -> CliError {
    match e {
        Error::BlowUp { .. } => CliError::BlowUp(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn write_all(files: Vec<(PathBuf, String)>) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::with_capacity(files.len());
    for (path, text) in files {
        write_file(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

fn state_json(u: &State3) -> Value {
    json!([u.u1, u.u2, u.u3])
}

pub fn simulate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    let params = cfg.minea_params()?;
    let stride = cfg.sim.record_stride.unwrap_or(100);
    let mut stream = make_stream(opts.seed, 0);
    let traj = simulate_path(
        &params,
        cfg.initial_state(),
        cfg.sim.t_end,
        cfg.sim.dt,
        cfg.sim.scheme,
        &mut stream,
        stride,
    )
    .map_err(core_err)?;
    let mut csv = Csv::new(&["t", "u1", "u2", "u3", "X"]);
    for (t, u) in traj.times.iter().zip(&traj.states) {
        csv.floats(&[*t, u.u1, u.u2, u.u3, u.x()]);
    }
    let files = write_all(vec![(
        output_path(&opts.prefix, "trajectory.csv"),
        csv.as_str().to_owned(),
    )])?;
    Ok(Outcome {
        files,
        ..Outcome::default()
    })
}

pub fn phase_scan(cfg: &ExperimentConfig, opts: &RunOptions, cancel: &AtomicBool) -> Result<Outcome, CliError> {
    let scan = cfg.scan()?;
    let mut scan_cfg = PhaseScanConfig::new(
        cfg.lambda()?,
        scan.kappa.clone(),
        scan.sigma.clone(),
        cfg.sim.t_end,
        cfg.sim.dt,
        cfg.sim.n_traj,
        opts.seed,
    );
    scan_cfg.initial = cfg.initial_state();
    scan_cfg.burn_in_frac = cfg.sim.burn_in_frac;
    scan_cfg.record_stride = cfg.sim.record_stride.unwrap_or(10);
    let rows = phase_scan_with_cancel(&scan_cfg, cancel).map_err(core_err)?;
    let interrupted = rows.len() < scan.kappa.len() * scan.sigma.len();

    let mut csv = Csv::new(&["kappa", "sigma", "regime", "ks_u1", "timeavg_X", "e55_bound", "verdict"]);
    for r in &rows {
        csv.row(&[
            fmt_f64(r.kappa),
            fmt_f64(r.sigma),
            r.regime.to_string(),
            fmt_f64(r.ks_u1),
            fmt_f64(r.timeavg_x),
            r.e55_bound.map(fmt_f64).unwrap_or_default(),
            r.verdict.to_string(),
        ]);
    }
    let files = write_all(vec![(
        output_path(&opts.prefix, "phase_scan.csv"),
        csv.as_str().to_owned(),
    )])?;
    for r in rows.iter().filter(|r| r.verdict == Verdict::Error) {
        eprintln!(
            "cell kappa={} sigma={}: {}",
            r.kappa,
            r.sigma,
            r.error.as_deref().unwrap_or("unknown error")
        );
    }
    if !interrupted && !rows.is_empty() && rows.iter().all(|r| r.verdict == Verdict::Error) {
        return Err(CliError::BlowUp(format!(
            "every phase-scan cell failed; first: {}",
            rows[0].error.as_deref().unwrap_or("unknown error")
        )));
    }
    Ok(Outcome {
        files,
        failure: None,
        interrupted,
    })
}

pub fn stationary_points(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    let params = cfg.minea_params()?;
    let set = enumerate_stationary(&params).map_err(core_err)?;
    let witness = |u: &State3| -> Result<Value, CliError> {
        let r = drift(&params, u).map_err(core_err)?.norm();
        Ok(json!({"point": state_json(u), "residual": r}))
    };
    let mut branches = Vec::new();
    for b in &set.branches {
        let witnesses: Vec<Value> = b.witnesses().iter().map(witness).collect::<Result<_, _>>()?;
        let mut desc = match b {
            StationaryBranch::Origin { point } => json!({"kind": "origin", "u1": point.u1}),
            StationaryBranch::Circle { u1, radius_sq, .. } => {
                json!({"kind": "circle", "u1": u1, "radius_sq": radius_sq})
            }
            StationaryBranch::AxisPair {
                axis, u1, amplitude_sq, ..
            } => json!({"kind": "axis_pair", "axis": axis, "u1": u1, "amplitude_sq": amplitude_sq}),
        };
        desc["witnesses"] = Value::Array(witnesses);
        branches.push(desc);
    }
    let text = to_json(&Value::Array(branches))?;
    let files = write_all(vec![(output_path(&opts.prefix, "stationary_points.json"), text)])?;
    Ok(Outcome {
        files,
        ..Outcome::default()
    })
}

fn samples_csv(law: &EmpiricalMeasure1D, column: &str) -> String {
    let mut csv = Csv::new(&[column]);
    for x in law.samples() {
        csv.floats(&[*x]);
    }
    csv.as_str().to_owned()
}

pub fn dual_basin(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    let params = cfg.minea_params()?;
    let sim = &cfg.sim;
    let report = dual_basin_experiment(&params, sim.t_end, sim.dt, sim.n_traj, opts.seed).map_err(core_err)?;
    let json = json!({
        "lambda": params.lambda,
        "kappa": params.kappa,
        "sigma": params.sigma,
        "t_end": sim.t_end,
        "dt": sim.dt,
        "n_traj": sim.n_traj,
        "seed": opts.seed,
        "mean_a": report.mean_a,
        "mean_b": report.mean_b,
        "ks_between": report.ks_between,
        "critical": report.critical,
        "alpha": minea_ergo::measure::SEPARATION_ALPHA,
        "separated": report.separated,
    });
    let files = write_all(vec![
        (output_path(&opts.prefix, "dual_basin.json"), to_json(&json)?),
        (
            output_path(&opts.prefix, "basin_a.csv"),
            samples_csv(&report.law_a, "u1"),
        ),
        (
            output_path(&opts.prefix, "basin_b.csv"),
            samples_csv(&report.law_b, "u1"),
        ),
    ])?;
    let failure = (opts.expect_separation && !report.separated).then(|| {
        format!(
            "basins not separated: KS {} <= critical {}",
            report.ks_between, report.critical
        )
    });
    Ok(Outcome {
        files,
        failure,
        interrupted: false,
    })
}

pub fn nse_verify(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    let params = cfg.nse_params()?;
    let nv = &cfg.nse_verify;
    let basis = params.basis().map_err(core_err)?;
    let mut failures = Vec::new();

    let mut stream = make_stream(opts.seed, AUX_STREAM);
    let identities = if nv.corrupt {
        let broken = |u: &SpectralField, v: &SpectralField| bilinear_b(u, v)?.add(&v.scale(1e-3));
        identity_suite(&basis, nv.identity_trials, &mut stream, broken)
    } else {
        identity_suite(&basis, nv.identity_trials, &mut stream, bilinear_b)
    }
    .map_err(core_err)?;
    let identities_pass = identities.max_residual() <= IDENTITY_TOLERANCE;
    if !identities_pass {
        failures.push(format!(
            "bilinear identity residual {} exceeds {IDENTITY_TOLERANCE}",
            identities.max_residual()
        ));
    }

    let mut stream = make_stream(opts.seed, AUX_STREAM + 1);
    let consistency = eigenmode_consistency(&params, nv.amplitude, nv.consistency_t, nv.consistency_dt, &mut stream)
        .map_err(core_err)?;
    let bound = CONSISTENCY_DT_FACTOR * nv.consistency_dt;
    let consistency_pass = consistency.max_deviation <= bound && consistency.max_offmode_energy <= OFFMODE_TOLERANCE;
    if !consistency_pass {
        failures.push(format!(
            "eigenmode consistency: deviation {} (bound {bound}), off-mode energy {}",
            consistency.max_deviation, consistency.max_offmode_energy
        ));
    }

    let indicator = params.small_noise_indicator();
    let small_noise = if !nv.convergence {
        json!({"skipped": "disabled in config"})
    } else if indicator > SMALL_NOISE_GATE {
        json!({
            "skipped": format!("small-noise indicator {indicator} exceeds {SMALL_NOISE_GATE}"),
            "indicator": indicator,
        })
    } else {
        let mut stream = make_stream(opts.seed, AUX_STREAM + 2);
        let raw = SpectralField::random(&basis, &mut stream, 1.0);
        let v = raw.scale(1.0 / raw.h_norm());
        let r = small_noise_convergence(
            &params,
            &v,
            nv.convergence_t,
            nv.convergence_dt,
            nv.convergence_n_traj,
            opts.seed,
        )
        .map_err(core_err)?;
        let initial = r.offmode_energy_decay[0];
        let last = *r.offmode_energy_decay.last().expect("at least one record");
        json!({
            "indicator": indicator,
            "n_traj": nv.convergence_n_traj,
            "t_end": nv.convergence_t,
            "dt": nv.convergence_dt,
            "times": r.times,
            "offmode_energy_decay": r.offmode_energy_decay,
            "total_energy": r.total_energy,
            "final_offmode_ratio": last / initial,
            "ks_forced_mode": r.ks_forced_mode,
            "ks_critical": ks_critical_one_sample(UNIQUE_KS_ALPHA, nv.convergence_n_traj),
        })
    };

    let report = json!({
        "params": {
            "mu": params.mu,
            "forced_mode": [params.forced_mode.k1, params.forced_mode.k2],
            "kappa": params.kappa,
            "sigma": params.sigma,
            "truncation": params.truncation,
        },
        "seed": opts.seed,
        "identities": {
            "trials": identities.trials,
            "antisymmetry": identities.antisymmetry,
            "energy": identities.energy,
            "eigenmode": identities.eigenmode,
            "enstrophy": identities.enstrophy,
            "tolerance": IDENTITY_TOLERANCE,
            "corrupted": nv.corrupt,
            "pass": identities_pass,
        },
        "consistency": {
            "amplitude": nv.amplitude,
            "t_end": nv.consistency_t,
            "dt": consistency.dt,
            "steps": consistency.steps,
            "max_deviation": consistency.max_deviation,
            "bound": bound,
            "max_offmode_energy": consistency.max_offmode_energy,
            "offmode_tolerance": OFFMODE_TOLERANCE,
            "pass": consistency_pass,
        },
        "small_noise": small_noise,
        "ou_second_moment_v": params.ou_second_moment_v(),
    });
    let files = write_all(vec![(output_path(&opts.prefix, "nse_verify.json"), to_json(&report)?)])?;
    Ok(Outcome {
        files,
        failure: (!failures.is_empty()).then(|| failures.join("; ")),
        interrupted: false,
    })
}

pub fn ou_check(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    let params = cfg.minea_params()?;
    let (l1, kappa, sigma) = (params.lambda1(), params.kappa, params.sigma);
    let law = ou_stationary_law(l1, kappa, sigma).map_err(core_err)?;
    let n = cfg.ou_check.n;
    let horizon = cfg.ou_check.horizon;
    // each sample: a draw from the analytic law pushed through one exact
    // transition, so the check covers the kernel as well as the formula
    let mut stream = make_stream(opts.seed, 0);
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let z0 = law.mean + law.std_dev() * stream.standard_normal();
        samples.push(ou_step(z0, horizon, l1, kappa, sigma, stream.standard_normal()).map_err(core_err)?);
    }
    let mut csv = Csv::new(&["z"]);
    for z in &samples {
        csv.floats(&[*z]);
    }
    let emp = EmpiricalMeasure1D::new(samples).map_err(core_err)?;
    let (mean, var) = (emp.mean(), emp.variance());
    let mean_se = (var / n as f64).sqrt();
    let var_se = law.variance * (2.0 / (n as f64 - 1.0)).sqrt();
    let critical = ks_critical_one_sample(UNIQUE_KS_ALPHA, n);
    let (ks, pass) = if law.is_point_mass() {
        let tol = 1e-12 * law.mean.abs().max(1.0);
        (None, emp.samples().iter().all(|z| (z - law.mean).abs() <= tol))
    } else {
        let d = ks_distance(&emp, &law).map_err(core_err)?;
        (Some(d), d < critical)
    };
    let report = json!({
        "lambda1": l1,
        "kappa": kappa,
        "sigma": sigma,
        "n": n,
        "seed": opts.seed,
        "horizon": horizon,
        "analytic_mean": law.mean,
        "analytic_variance": law.variance,
        "empirical_mean": mean,
        "empirical_variance": var,
        "mean_standard_error": mean_se,
        "variance_standard_error": var_se,
        "mean_within_3se": (mean - law.mean).abs() <= 3.0 * mean_se.max(f64::MIN_POSITIVE),
        "variance_within_3se": (var - law.variance).abs() <= 3.0 * var_se.max(f64::MIN_POSITIVE),
        "point_mass": law.is_point_mass(),
        "ks": ks,
        "ks_critical": critical,
        "alpha": UNIQUE_KS_ALPHA,
        "pass": pass,
    });
    let files = write_all(vec![
        (output_path(&opts.prefix, "ou_check.json"), to_json(&report)?),
        (output_path(&opts.prefix, "ou_samples.csv"), csv.as_str().to_owned()),
    ])?;
    let failure = (!pass).then(|| match ks {
        Some(d) => format!("KS {d} >= 1% critical value {critical}"),
        None => "samples left the point mass".to_owned(),
    });
    Ok(Outcome {
        files,
        failure,
        interrupted: false,
    })
}

/// Regime label and threshold, printed by the runner for context.
pub fn regime_summary(cfg: &ExperimentConfig) -> Option<String> {
    let params = cfg.minea_params().ok()?;
    let r = uniqueness_regime(&params).ok()?;
    Some(format!("regime {} (threshold {})", r.regime, r.threshold))
}
