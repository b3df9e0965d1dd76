use minea_ergo::measure::default_rho;
use minea_ergo::measure::{
    dual_basin_experiment, e55_check, ensemble_law, ks_critical_one_sample, ks_distance, ks_distance_point_mass,
    phase_scan, time_average_x, EmpiricalMeasure1D, OccupationMeasure, PhaseScanConfig, Verdict,
};
use minea_ergo::{gaussian_invariant, make_stream, simulate, Error, GaussianLaw1D, MineaParams, Scheme, State3};
use statrs::distribution::{ContinuousCDF, Normal};

fn params(l: [f64; 3], kappa: f64, sigma: f64) -> MineaParams {
    MineaParams::new(l[0], l[1], l[2], kappa, sigma).unwrap()
}

#[test]
fn ks_of_exact_quantiles() {
    let n = 1000;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let xs: Vec<f64> = (1..=n)
        .map(|i| normal.inverse_cdf((i as f64 - 0.5) / n as f64))
        .collect();
    let d = ks_distance(
        &EmpiricalMeasure1D::new(xs).unwrap(),
        &GaussianLaw1D::new(0.0, 1.0).unwrap(),
    )
    .unwrap();
    assert!(d <= 0.5 / n as f64 + 1e-6, "{d}");
}

#[test]
fn ks_of_matching_draws() {
    let mut s = make_stream(2024, 0);
    let law = GaussianLaw1D::new(2.0, 0.5).unwrap();
    let xs: Vec<f64> = (0..10_000).map(|_| 2.0 + law.std_dev() * s.standard_normal()).collect();
    let d = ks_distance(&EmpiricalMeasure1D::new(xs).unwrap(), &law).unwrap();
    assert!(d < 1.63 / 100.0, "{d}");
    assert!((ks_critical_one_sample(0.01, 10_000) - 1.6276 / 100.0).abs() < 1e-5);
}

/// Along the `u1` axis the system is the OU process; its occupation measure
/// over `T = 1e4 / l1` must match the Gaussian first marginal. Samples are
/// taken every `5 / l1` so that they are close to independent.
#[test]
fn occupation_measure_of_the_axis_matches_the_gaussian_marginal() {
    for (l1, kappa, sigma) in [(1.0, 2.0, 1.0), (2.0, -1.0, 0.5)] {
        let p = params([l1, 1.0, 1.0], kappa, sigma);
        let dt = 1e-2;
        let t_end = 1e4 / l1;
        let stride = (5.0 / l1 / dt).round() as usize;
        let mut s = make_stream(31, 0);
        let traj = simulate(
            &p,
            State3::new(kappa / l1, 0.0, 0.0),
            t_end,
            dt,
            Scheme::ExpSplitting,
            &mut s,
            stride,
        )
        .unwrap();
        let occ = OccupationMeasure::from_trajectory(&traj, 0.0).unwrap();
        assert!((occ.total_weight() - 1.0).abs() < 1e-12);
        let law = gaussian_invariant(&p).unwrap().first;
        let critical = ks_critical_one_sample(0.01, occ.len());
        let d = occ.marginal_ks(1, &law).unwrap();
        assert!(d < critical, "weighted: {d} vs {critical}");
        let emp = EmpiricalMeasure1D::new(occ.samples.iter().map(|u| u.u1).collect()).unwrap();
        let d = ks_distance(&emp, &law).unwrap();
        assert!(d < critical, "unweighted: {d} vs {critical}");
    }
}

#[test]
fn law_of_large_numbers_for_the_ou_component() {
    let (l1, kappa, sigma) = (1.0, 2.0, 1.0);
    let p = params([l1, 1.0, 1.0], kappa, sigma);
    let t = 1e3;
    for seed in 0..5 {
        let mut s = make_stream(seed, 0);
        let traj = simulate(&p, State3::new(0.0, 0.0, 0.0), t, 1e-2, Scheme::ExpSplitting, &mut s, 1).unwrap();
        let avg = OccupationMeasure::from_trajectory(&traj, 0.0)
            .unwrap()
            .expectation(|u| u.u1);
        let tol = 5.0 * sigma / (2.0 * l1 * t).sqrt();
        assert!((avg - kappa / l1).abs() < tol, "seed {seed}: {avg}");
    }
}

#[test]
fn ensemble_on_the_origin_keeps_transverse_zero() {
    let p = params([1.0, 1.0, 1.0], 1.7, 0.9);
    let law = ensemble_law(&p, State3::default(), 5.0, 1e-3, 20, 3, 2).unwrap();
    assert!(law.samples().iter().all(|x| *x == 0.0));
}

#[test]
fn subcritical_ensemble_collapses_transverse_modes() {
    let p = params([1.0, 1.0, 1.0], 0.5, 0.3);
    let law = ensemble_law(&p, State3::new(0.0, 1.0, 1.0), 100.0, 1e-3, 100, 5, 2).unwrap();
    assert!(law.fraction_where(|x| x.abs() < 1e-6) >= 0.95);
}

#[test]
fn pure_noise_ensemble_matches_the_stationary_moments() {
    // on the axis the exp scheme is the exact OU chain, so a coarse step is exact
    let p = params([1.0, 1.0, 1.0], 0.0, 1.0);
    let n = 10_000;
    let law = ensemble_law(&p, State3::default(), 20.0, 1e-2, n, 17, 1).unwrap();
    assert!(law.mean().abs() < 3.0 * (0.5 / n as f64).sqrt(), "{}", law.mean());
    assert!((law.variance() - 0.5).abs() < 0.025, "{}", law.variance());
}

#[test]
fn ensemble_law_rejects_single_trajectory() {
    let p = params([1.0, 1.0, 1.0], 0.5, 0.3);
    assert!(matches!(
        ensemble_law(&p, State3::default(), 1.0, 1e-2, 1, 0, 1),
        Err(Error::InvalidParameter(_))
    ));
}

#[test]
fn deterministic_supercritical_time_average() {
    let p = params([1.0, 1.0, 1.0], 2.0, 0.0);
    let mut s = make_stream(0, 0);
    let traj = simulate(
        &p,
        State3::new(0.0, 1.0, 0.0),
        200.0,
        1e-3,
        Scheme::ExpSplitting,
        &mut s,
        10,
    )
    .unwrap();
    let x = time_average_x(&traj, 0.5).unwrap();
    assert!((x - 1.0).abs() < 1e-3, "{x}");
    let check = e55_check(&traj, &p, 0.8).unwrap();
    assert!(check.pass);
    assert!((check.observed - 1.0).abs() < 1e-3);
    assert_eq!(check.bound, 0.8);
}

#[test]
fn noisy_supercritical_time_average_clears_the_bound() {
    let p = params([1.0, 1.0, 1.0], 2.0, 0.1);
    assert!((default_rho(&p) - 0.8).abs() < 1e-15);
    let n = 10;
    let mut passes = 0;
    for i in 0..n {
        let mut s = make_stream(99, i);
        let traj = simulate(
            &p,
            State3::new(0.0, 1.0, 0.0),
            500.0,
            1e-3,
            Scheme::ExpSplitting,
            &mut s,
            10,
        )
        .unwrap();
        let check = e55_check(&traj, &p, 0.8).unwrap();
        assert!(check.observed >= 0.0 && check.time_average >= check.observed);
        passes += check.pass as usize;
    }
    assert!(passes as f64 >= 0.95 * n as f64, "{passes}/{n}");
}

#[test]
fn time_average_bound_rejects_subcritical() {
    let p = params([1.0, 1.0, 1.0], 0.5, 0.1);
    let mut s = make_stream(0, 0);
    let traj = simulate(
        &p,
        State3::new(0.0, 1.0, 0.0),
        10.0,
        1e-2,
        Scheme::ExpSplitting,
        &mut s,
        1,
    )
    .unwrap();
    assert!(matches!(e55_check(&traj, &p, 0.1), Err(Error::InvalidParameter(_))));
}

#[test]
fn deterministic_dual_basin_gives_point_masses() {
    let p = params([1.0, 1.0, 1.0], 2.0, 0.0);
    let r = dual_basin_experiment(&p, 200.0, 1e-3, 10, 0).unwrap();
    // the OU recursion reaches kappa / l1 up to rounding
    assert!(r.law_a.samples().iter().all(|x| (x - 2.0).abs() < 1e-12));
    let atom = r.law_a.samples()[0];
    assert_eq!(ks_distance_point_mass(&r.law_a, atom), 0.0);
    assert!(r.law_b.samples().iter().all(|x| (x - 1.0).abs() < 1e-6));
    assert!(r.separated);
}

#[test]
fn noisy_dual_basin_separates() {
    let p = params([1.0, 1.0, 1.0], 2.0, 0.1);
    let r = dual_basin_experiment(&p, 200.0, 1e-3, 500, 12).unwrap();
    assert!((r.mean_a - 2.0).abs() < 0.05, "{}", r.mean_a);
    assert!((r.mean_b - 1.0).abs() < 0.1, "{}", r.mean_b);
    assert!(r.separated && r.ks_between > r.critical);
}

#[test]
fn dual_basin_uses_the_slow_axis() {
    // l3 < l2: the surviving branch lives on u3 and sits at u1 = l3
    let p = params([1.0, 3.0, 1.0], 2.0, 0.0);
    let r = dual_basin_experiment(&p, 200.0, 1e-3, 2, 0).unwrap();
    assert!(r.law_b.samples().iter().all(|x| (x - 1.0).abs() < 1e-6));
}

#[test]
fn phase_scan_single_cells() {
    let cfg = PhaseScanConfig::new([1.0, 1.0, 1.0], vec![0.5], vec![0.3], 100.0, 1e-3, 40, 1);
    let rows = phase_scan(&cfg).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].verdict, Verdict::UniqueLike, "{:?}", rows[0]);
    assert!(rows[0].e55_bound.is_none());

    let cfg = PhaseScanConfig::new([1.0, 1.0, 1.0], vec![2.0], vec![0.1], 100.0, 1e-3, 40, 1);
    let rows = phase_scan(&cfg).unwrap();
    assert_eq!(rows[0].verdict, Verdict::MultiLike, "{:?}", rows[0]);
    assert_eq!(rows[0].e55_bound, Some(0.8));
}

#[test]
fn phase_scan_boundary_cell_is_inconclusive() {
    let cfg = PhaseScanConfig::new([1.0, 1.0, 1.0], vec![1.0], vec![0.2], 20.0, 1e-2, 5, 1);
    let rows = phase_scan(&cfg).unwrap();
    assert_eq!(rows[0].verdict, Verdict::Inconclusive);
    assert!((0.0..=1.0).contains(&rows[0].ks_u1) && rows[0].timeavg_x >= 0.0);
}

#[test]
fn phase_scan_is_row_major_and_reproducible() {
    let cfg = PhaseScanConfig::new([1.0, 1.0, 1.0], vec![0.5, 2.0], vec![0.1, 0.3], 10.0, 1e-2, 4, 9);
    let a = phase_scan(&cfg).unwrap();
    let b = phase_scan(&cfg).unwrap();
    assert_eq!(a, b);
    let order: Vec<(f64, f64)> = a.iter().map(|r| (r.kappa, r.sigma)).collect();
    assert_eq!(order, vec![(0.5, 0.1), (0.5, 0.3), (2.0, 0.1), (2.0, 0.3)]);
}
