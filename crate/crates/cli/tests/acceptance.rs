//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each; exits nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use minea_ergo::measure::{ensemble_endpoints, ensemble_mean_path, ks_critical_one_sample, EnsembleSpec};
use minea_ergo::minea::{b_form, bilinear, drift, StationaryBranch, Stepper};
use minea_ergo::noise::ou_step;
use minea_ergo::spectral::{bilinear_b, eigenmode_consistency, identity_suite, NseStepper, StokesOuStepper};
use minea_ergo::{
    dual_basin_experiment, e55_check, ks_distance, make_stream, ou_stationary_law, simulate, stationary_points,
    uniqueness_regime, GaussianLaw1D, MineaParams, NseParams, Regime, Scheme, SpectralField, State3, Wavevector,
};
use rayon::prelude::*;
use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_minea-ergo");

type Check = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn params(l: [f64; 3], kappa: f64, sigma: f64) -> MineaParams {
    MineaParams::new(l[0], l[1], l[2], kappa, sigma).unwrap()
}

fn run_cli(dir: &Path, sub: &str, config: &str, prefix: &str, workers: usize) -> Result<Vec<PathBuf>, String> {
    let cfg = dir.join(format!("{prefix}.config.json"));
    std::fs::write(&cfg, config).map_err(|e| e.to_string())?;
    let out = dir.join(prefix);
    let o = Command::new(BIN)
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .env("MINEA_ERGO_WORKERS", workers.to_string())
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!(
            "{sub} exited {:?}: {}",
            o.status.code(),
            String::from_utf8_lossy(&o.stderr).trim()
        ));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let name = p.file_name().unwrap().to_string_lossy();
            name.starts_with(&format!("{prefix}.")) && !name.ends_with(".config.json")
        })
        .collect();
    files.sort();
    Ok(files)
}

fn stationary_ou_law(dir: &Path) -> Check {
    let files = run_cli(
        dir,
        "ou-check",
        r#"{"system": {"lambda": [1, 1, 1], "kappa": 2, "sigma": 1}, "sim": {"seed": 2024}}"#,
        "ou",
        1,
    )?;
    let json = files
        .iter()
        .find(|p| p.to_string_lossy().ends_with(".ou_check.json"))
        .ok_or("no report")?;
    let v: Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    let f = |k: &str| v[k].as_f64().unwrap();
    let mean_ok = (f("empirical_mean") - 2.0).abs() <= 3.0 * f("mean_standard_error");
    let var_ok = (f("empirical_variance") - 0.5).abs() <= 3.0 * f("variance_standard_error");
    let ks_ok = f("ks") < f("ks_critical");
    ensure(
        v["n"].as_u64() == Some(100_000) && mean_ok && var_ok && ks_ok,
        format!(
            "n={} mean={:.5} var={:.5} KS={:.5} (crit {:.5})",
            v["n"],
            f("empirical_mean"),
            f("empirical_variance"),
            f("ks"),
            f("ks_critical")
        ),
    )
}

fn bilinear_identities() -> Check {
    let mut s = make_stream(31, 0);
    let mut rnd = || State3::new(s.standard_normal(), s.standard_normal(), s.standard_normal());
    let trials = 10_000;
    let (mut anti, mut energy): (f64, f64) = (0.0, 0.0);
    for _ in 0..trials {
        let (u, v, w) = (rnd(), rnd(), rnd());
        let scale = u.norm() * v.norm() * w.norm();
        anti = anti.max((b_form(&u, &v, &w) + b_form(&u, &w, &v)).abs() / scale);
        energy = energy.max(bilinear(&u, &u).dot(&u).abs() / u.norm().powi(3));
    }
    let f = State3::basis;
    let basis_ok = bilinear(&f(1), &f(1)) == State3::new(0.0, 0.0, 0.0)
        && bilinear(&f(2), &f(2)) == f(1) * -1.0
        && bilinear(&f(3), &f(3)) == f(1) * -1.0;

    let basis = minea_ergo::Truncation::new(8).unwrap();
    let mut s = make_stream(32, 0);
    let r = identity_suite(&basis, 100, &mut s, bilinear_b).map_err(|e| e.to_string())?;
    ensure(
        anti <= 1e-10 && energy <= 1e-10 && basis_ok && r.max_residual() <= 1e-10 && r.trials >= 100,
        format!(
            "3-mode: {trials} triples, antisym {anti:.1e}, energy {energy:.1e}, basis {basis_ok}; N=8: {} trials, max {:.1e}",
            r.trials,
            r.max_residual()
        ),
    )
}

#[derive(Debug, PartialEq)]
enum Kind {
    Origin,
    Circle(f64, f64),
    Axis(usize, f64, f64),
}

fn stationary_case_table() -> Check {
    // (lambda, kappa, expected branches in order)
    let cases: [([f64; 3], f64, Vec<Kind>); 6] = [
        ([1.0, 2.0, 3.0], 1.5, vec![Kind::Origin]),
        ([1.0, 2.0, 2.0], 3.0, vec![Kind::Origin, Kind::Circle(2.0, 1.0)]),
        // l2 > l3, l1 l3 < kappa <= l1 l2: only the u3 pair
        ([1.0, 3.0, 2.0], 2.5, vec![Kind::Origin, Kind::Axis(3, 2.0, 0.5)]),
        ([2.0, 3.0, 1.5], 3.5, vec![Kind::Origin, Kind::Axis(3, 1.5, 0.5)]),
        // l3 > l2, l1 l2 < kappa <= l1 l3: only the u2 pair
        ([1.0, 2.0, 3.0], 2.5, vec![Kind::Origin, Kind::Axis(2, 2.0, 0.5)]),
        // l1 max(l2, l3) < kappa: both pairs
        (
            [1.0, 2.0, 3.0],
            4.0,
            vec![Kind::Origin, Kind::Axis(2, 2.0, 2.0), Kind::Axis(3, 3.0, 1.0)],
        ),
    ];
    let mut worst: f64 = 0.0;
    for (l, kappa, want) in cases {
        let p = params(l, kappa, 0.0);
        let set = stationary_points(&p).map_err(|e| e.to_string())?;
        let got: Vec<Kind> = set
            .branches
            .iter()
            .map(|b| match b {
                StationaryBranch::Origin { .. } => Kind::Origin,
                StationaryBranch::Circle { u1, radius_sq, .. } => Kind::Circle(*u1, *radius_sq),
                StationaryBranch::AxisPair {
                    axis, u1, amplitude_sq, ..
                } => Kind::Axis(*axis, *u1, *amplitude_sq),
            })
            .collect();
        if got != want {
            return Err(format!("lambda={l:?} kappa={kappa}: got {got:?}, want {want:?}"));
        }
        let regime = uniqueness_regime(&p).map_err(|e| e.to_string())?.regime;
        let expect_unique = want.len() == 1;
        if (regime == Regime::Subcritical) != expect_unique {
            return Err(format!("lambda={l:?} kappa={kappa}: regime {regime}"));
        }
        for w in set.witnesses() {
            worst = worst.max(drift(&p, &w).unwrap().norm());
        }
    }
    ensure(
        worst < 1e-12,
        format!("6 parameter sets, max witness residual {worst:.1e}"),
    )
}

fn subcritical_uniqueness() -> Check {
    let p = params([1.0, 1.0, 1.0], 0.5, 0.3);
    let spec = EnsembleSpec {
        params: p,
        initial: State3::new(0.0, 1.0, 1.0),
        t_end: 100.0,
        dt: 1e-3,
        scheme: Scheme::ExpSplitting,
        seed: 4,
    };
    let n = 100;
    let ends = ensemble_endpoints(&spec, 0..n).map_err(|e| e.to_string())?;
    let collapsed = ends.iter().filter(|u| u.x() < 1e-6).count();
    let u1 = minea_ergo::EmpiricalMeasure1D::new(ends.iter().map(|u| u.u1).collect()).map_err(|e| e.to_string())?;
    let law = GaussianLaw1D::new(0.5, 0.045).unwrap();
    let ks = ks_distance(&u1, &law).map_err(|e| e.to_string())?;
    let crit = ks_critical_one_sample(0.01, n as usize);
    ensure(
        collapsed as f64 >= 0.95 * n as f64 && ks < crit,
        format!("X(T)<1e-6 on {collapsed}/{n}, KS {ks:.4} (crit {crit:.4})"),
    )
}

fn supercritical_non_uniqueness() -> Check {
    let p = params([1.0, 1.0, 1.0], 2.0, 0.1);
    let n = 50u64;
    let checks: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = make_stream(55, i);
            let traj = simulate(
                &p,
                State3::new(0.0, 1.0, 0.0),
                500.0,
                1e-3,
                Scheme::ExpSplitting,
                &mut s,
                10,
            )?;
            e55_check(&traj, &p, 0.8)
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let passes = checks.iter().filter(|c| c.pass).count();
    let min_obs = checks.iter().map(|c| c.observed).fold(f64::INFINITY, f64::min);
    let r = dual_basin_experiment(&p, 500.0, 1e-3, 500, 56).map_err(|e| e.to_string())?;
    ensure(
        passes as f64 >= 0.95 * n as f64
            && r.separated
            && (r.mean_a - 2.0).abs() <= 0.05
            && (r.mean_b - 1.0).abs() <= 0.1,
        format!(
            "bound held on {passes}/{n} (min observed {min_obs:.3} vs 0.76); basins: means {:.4} / {:.4}, KS {:.3} (crit {:.3})",
            r.mean_a, r.mean_b, r.ks_between, r.critical
        ),
    )
}

fn invariant_subspace() -> Check {
    let dt = 1e-3;
    let n = 100_000;
    let p = params([1.0, 2.0, 3.0], 5.0, 0.5);
    let stepper = Stepper::new(&p, dt, Scheme::ExpSplitting).map_err(|e| e.to_string())?;
    let mut s = make_stream(6, 0);
    let mut u = State3::new(0.3, 0.0, 0.0);
    let mut z = u.u1;
    let mut minea_dev: f64 = 0.0;
    for k in 1..=n {
        let g = s.standard_normal();
        u = stepper.step(&u, g, k).map_err(|e| e.to_string())?;
        z = ou_step(z, dt, p.lambda1(), p.kappa, p.sigma, g).unwrap();
        if u.u2 != 0.0 || u.u3 != 0.0 {
            return Err(format!("3-mode transverse coordinate left zero at step {k}: {u:?}"));
        }
        minea_dev = minea_dev.max((u.u1 - z).abs());
    }

    let nse = NseParams::new(1.0, Wavevector::new(1, 0).unwrap(), 1.0, 0.5, 8).unwrap();
    let mut s = make_stream(6, 1);
    let r = eigenmode_consistency(&nse, 1.0, n as f64 * dt, dt, &mut s).map_err(|e| e.to_string())?;
    ensure(
        r.steps == n && r.max_offmode_energy == 0.0 && minea_dev <= 5.0 * dt && r.max_deviation <= 5.0 * dt,
        format!(
            "{n} steps; 3-mode OU deviation {minea_dev:.1e}; N=8 off-mode energy {:e}, OU deviation {:.2e} (limit {:.0e})",
            r.max_offmode_energy,
            r.max_deviation,
            5.0 * dt
        ),
    )
}

/// Ensemble mean of `|u|_H^2` for the Galerkin system on a fixed time grid.
fn nse_mean_energy(
    p: &NseParams,
    v: &SpectralField,
    t_end: f64,
    dt: f64,
    n_traj: u64,
    seed: u64,
    stride: usize,
) -> Result<Vec<f64>, String> {
    let basis = p.basis().map_err(|e| e.to_string())?;
    let stepper = NseStepper::new(p, &basis, dt).map_err(|e| e.to_string())?;
    let n_steps = (t_end / dt).round() as usize;
    let sqrt_dt = dt.sqrt();
    let paths: Vec<Vec<f64>> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut s = make_stream(seed, i);
            let mut u = v.clone();
            let mut out = vec![u.h_norm_sq()];
            for k in 1..=n_steps {
                u = stepper.step(&u, sqrt_dt * s.standard_normal(), k)?;
                if k % stride == 0 {
                    out.push(u.h_norm_sq());
                }
            }
            Ok(out)
        })
        .collect::<minea_ergo::Result<_>>()
        .map_err(|e| e.to_string())?;
    let mut mean = vec![0.0; paths[0].len()];
    for path in &paths {
        for (m, x) in mean.iter_mut().zip(path) {
            *m += x / n_traj as f64;
        }
    }
    Ok(mean)
}

fn energy_ceiling() -> Check {
    let n_traj = 200;
    let mut lines = Vec::new();
    let mut ok = true;
    for (l, kappa, sigma, v) in [
        ([1.0, 2.0, 3.0], 4.0, 0.5, State3::new(1.0, 1.0, 1.0)),
        ([1.0, 1.0, 1.0], 0.5, 1.0, State3::new(-3.0, 2.0, 0.5)),
    ] {
        let p = params(l, kappa, sigma);
        let spec = EnsembleSpec {
            params: p,
            initial: v,
            t_end: 100.0,
            dt: 1e-3,
            scheme: Scheme::ExpSplitting,
            seed: 7,
        };
        let (_, means) = ensemble_mean_path(&spec, n_traj, 100, State3::norm_sq).map_err(|e| e.to_string())?;
        let peak = means.iter().copied().fold(0.0, f64::max);
        let ceiling = p.moment_ceiling(&v);
        ok &= peak < ceiling;
        lines.push(format!("3-mode sup {peak:.3} < {ceiling:.3}"));
    }

    let nse = NseParams::new(1.0, Wavevector::new(1, 0).unwrap(), 1.0, 1.0, 4).unwrap();
    let basis = nse.basis().unwrap();
    let mut s = make_stream(70, 0);
    let raw = SpectralField::random(&basis, &mut s, 1.0);
    let v = raw.scale(2.0 / raw.h_norm());
    let means = nse_mean_energy(&nse, &v, 100.0, 1e-2, n_traj, 71, 10)?;
    let peak = means.iter().copied().fold(0.0, f64::max);
    let ceiling = nse.energy_ceiling(v.h_norm_sq());
    ok &= peak < ceiling;
    lines.push(format!("N=4 sup {peak:.3} < {ceiling:.3}"));
    ensure(ok, format!("{n_traj} trajectories each; {}", lines.join("; ")))
}

fn stokes_second_moment() -> Check {
    let p = NseParams::new(1.0, Wavevector::new(1, 0).unwrap(), 1.0, 1.0, 8).unwrap();
    let basis = p.basis().unwrap();
    let dt = 1e-2;
    let stepper = StokesOuStepper::new(&p, &basis, dt).map_err(|e| e.to_string())?;
    let mut s = make_stream(8, 0);
    // start from a stationary draw so the whole horizon counts
    let law = ou_stationary_law(p.forced_rate(), p.kappa, p.sigma).unwrap();
    let a0 = law.mean + law.std_dev() * s.standard_normal();
    let mut z = minea_ergo::spectral::stokes_eigenmode(&basis, p.forced_mode)
        .unwrap()
        .scale(a0);
    let (batches, per_batch) = (100, 10_000);
    let mut means = Vec::with_capacity(batches);
    for _ in 0..batches {
        let mut acc = 0.0;
        for _ in 0..per_batch {
            z = stepper.step(&z, s.standard_normal());
            acc += z.v_norm_sq();
        }
        means.push(acc / per_batch as f64);
    }
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    let se = (var / batches as f64).sqrt();
    let want = p.ou_second_moment_v();
    ensure(
        want == 1.5 && (mean - want).abs() < 3.0 * se,
        format!(
            "T={} at dt={dt}: time average {mean:.4} vs {want} (SE {se:.4})",
            (batches * per_batch) as f64 * dt
        ),
    )
}

fn determinism(dir: &Path) -> Check {
    let runs: [(&str, &str, &str); 6] = [
        (
            "simulate",
            "sim",
            r#"{"system": {"lambda": [1, 1, 1], "kappa": 2, "sigma": 0.1}, "initial": [0, 1, 0], "sim": {"seed": 9}}"#,
        ),
        (
            "phase-scan",
            "scan",
            r#"{"system": {"lambda": [1, 1, 1]}, "scan": {"kappa": [0.5, 1.0, 2.0], "sigma": [0.1, 0.3]}, "sim": {"t_end": 50, "n_traj": 12, "seed": 9}}"#,
        ),
        (
            "stationary-points",
            "sp",
            r#"{"system": {"lambda": [1, 2, 2], "kappa": 3, "sigma": 0}}"#,
        ),
        (
            "dual-basin",
            "db",
            r#"{"system": {"lambda": [1, 1, 1], "kappa": 2, "sigma": 0.1}, "sim": {"t_end": 50, "n_traj": 40, "seed": 9}}"#,
        ),
        (
            "nse-verify",
            "nse",
            r#"{"nse": {"kappa": 0.05, "sigma": 0.05, "truncation": 3}, "sim": {"seed": 9},
                "nse_verify": {"consistency_t": 2, "convergence_t": 10, "convergence_n_traj": 6}}"#,
        ),
        (
            "ou-check",
            "ou",
            r#"{"system": {"lambda": [1, 2, 1], "kappa": 2, "sigma": 1}, "sim": {"seed": 9}, "ou_check": {"n": 20000}}"#,
        ),
    ];
    let mut compared = 0;
    let mut bytes = 0;
    for (sub, name, cfg) in runs {
        let mut outputs = Vec::new();
        for (tag, workers) in [("a", 1), ("b", 1), ("c", 4)] {
            let run_dir = dir.join(format!("det-{tag}"));
            std::fs::create_dir_all(&run_dir).unwrap();
            let files = run_cli(&run_dir, sub, cfg, name, workers)?;
            if files.is_empty() {
                return Err(format!("{sub} wrote nothing"));
            }
            let contents: Vec<(String, Vec<u8>)> = files
                .iter()
                .map(|p| {
                    (
                        p.file_name().unwrap().to_string_lossy().into_owned(),
                        std::fs::read(p).unwrap(),
                    )
                })
                .collect();
            outputs.push(contents);
        }
        for other in &outputs[1..] {
            if *other != outputs[0] {
                return Err(format!("{sub}: outputs differ across repeats or worker counts"));
            }
        }
        compared += outputs[0].len();
        bytes += outputs[0].iter().map(|(_, b)| b.len()).sum::<usize>();
    }
    Ok(format!(
        "{compared} files ({bytes} bytes) identical over 2 repeats at 1 worker and 1 run at 4 workers"
    ))
}

fn main() {
    let dir = TempDir::new().expect("temp dir");
    let criteria: Vec<(&str, Option<Duration>, Box<dyn Fn() -> Check>)> = vec![
        (
            "1 OU stationary law",
            Some(Duration::from_secs(5)),
            Box::new(|| stationary_ou_law(dir.path())),
        ),
        (
            "2 bilinear identities",
            Some(Duration::from_secs(10)),
            Box::new(bilinear_identities),
        ),
        (
            "3 stationary-point table",
            Some(Duration::from_secs(1)),
            Box::new(stationary_case_table),
        ),
        (
            "4 subcritical uniqueness",
            Some(Duration::from_secs(60)),
            Box::new(subcritical_uniqueness),
        ),
        (
            "5 supercritical non-uniqueness",
            Some(Duration::from_secs(180)),
            Box::new(supercritical_non_uniqueness),
        ),
        (
            "6 invariant subspace",
            Some(Duration::from_secs(30)),
            Box::new(invariant_subspace),
        ),
        (
            "7 moment and energy ceilings",
            Some(Duration::from_secs(60)),
            Box::new(energy_ceiling),
        ),
        (
            "8 Stokes OU second moment",
            Some(Duration::from_secs(30)),
            Box::new(stokes_second_moment),
        ),
        ("9 determinism", None, Box::new(|| determinism(dir.path()))),
    ];
    let mut failed = 0;
    for (name, budget, check) in &criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let over = budget.is_some_and(|b| elapsed > b);
        let budget_txt = budget.map_or("incremental".to_owned(), |b| format!("budget {}s", b.as_secs()));
        let (ok, detail) = match result {
            Ok(d) if !over => (true, d),
            Ok(d) => (false, format!("{d}; too slow")),
            Err(d) => (false, d),
        };
        failed += !ok as usize;
        println!(
            "[{}] {name}: {detail} ({:.2}s, {budget_txt})",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
