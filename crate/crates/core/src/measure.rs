//! Empirical laws, occupation measures and Kolmogorov-Smirnov statistics,
//! plus the ensemble experiments that probe uniqueness and non-uniqueness of
//! invariant laws of the Minea system.

use std::ops::Range;
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minea::{
    gaussian_invariant, propagate, simulate, step_count, uniqueness_regime, MineaParams, Regime, Scheme, State3,
    Stepper, Trajectory,
};
use crate::noise::{make_stream, GaussianLaw1D};

/// Default fraction of the horizon discarded before stationary statistics.
pub const DEFAULT_BURN_IN: f64 = 0.5;
/// Default relative slack of the time-average lower bound check.
pub const DEFAULT_E55_TOLERANCE: f64 = 0.05;
/// Fraction of the admissible `rho` interval used by default.
pub const DEFAULT_RHO_FRACTION: f64 = 0.8;

/// Asymptotic critical value `c(alpha)` of the Kolmogorov distribution,
/// `sqrt(-ln(alpha / 2) / 2)`.
pub fn kolmogorov_critical_value(alpha: f64) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    (-0.5 * (alpha / 2.0).ln()).sqrt()
}

/// Critical one-sample KS distance for `n` samples at level `alpha`.
pub fn ks_critical_one_sample(alpha: f64, n: usize) -> f64 {
    kolmogorov_critical_value(alpha) / (n as f64).sqrt()
}

/// Critical two-sample KS distance for sizes `n`, `m` at level `alpha`.
pub fn ks_critical_two_sample(alpha: f64, n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    kolmogorov_critical_value(alpha) * ((n + m) / (n * m)).sqrt()
}

/// Survival function `P(K > x)` of the Kolmogorov distribution.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        // P(K <= x) < 1e-12 here, and the alternating series converges poorly
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// A sorted finite sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMeasure1D {
    samples: Vec<f64>,
}

impl EmpiricalMeasure1D {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("empirical measure needs at least one sample"));
        }
        if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample {bad}")));
        }
        samples.sort_by(f64::total_cmp);
        Ok(EmpiricalMeasure1D { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Right-continuous empirical distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        self.samples.partition_point(|s| *s <= x) as f64 / self.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.len() as f64
    }

    /// Unbiased sample variance (zero for a single sample).
    pub fn variance(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        self.samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
    }

    pub fn standard_error(&self) -> f64 {
        (self.variance() / self.len() as f64).sqrt()
    }

    pub fn fraction_where(&self, pred: impl Fn(f64) -> bool) -> f64 {
        self.samples.iter().filter(|x| pred(**x)).count() as f64 / self.len() as f64
    }

    /// Union of two samples.
    pub fn merge(&self, other: &EmpiricalMeasure1D) -> EmpiricalMeasure1D {
        let mut samples = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.len() && j < other.len() {
            if self.samples[i].total_cmp(&other.samples[j]).is_le() {
                samples.push(self.samples[i]);
                i += 1;
            } else {
                samples.push(other.samples[j]);
                j += 1;
            }
        }
        samples.extend_from_slice(&self.samples[i..]);
        samples.extend_from_slice(&other.samples[j..]);
        EmpiricalMeasure1D { samples }
    }
}

/// `sup_x |F_emp(x) - F(x)|` for a Gaussian with positive variance, evaluated
/// on both sides of every jump.
pub fn ks_distance(emp: &EmpiricalMeasure1D, law: &GaussianLaw1D) -> Result<f64> {
    if !(law.variance > 0.0) {
        return Err(Error::invalid("KS distance needs a law with positive variance"));
    }
    let n = emp.len() as f64;
    let xs = emp.samples();
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i + 1;
        while j < xs.len() && xs[j] == xs[i] {
            j += 1;
        }
        let f = law.cdf(xs[i]);
        d = d.max(j as f64 / n - f).max(f - i as f64 / n);
        i = j;
    }
    Ok(d.clamp(0.0, 1.0))
}

/// KS distance to the point mass at `atom`.
pub fn ks_distance_point_mass(emp: &EmpiricalMeasure1D, atom: f64) -> f64 {
    let n = emp.len() as f64;
    let below = emp.samples().partition_point(|s| *s < atom) as f64;
    let at_or_below = emp.samples().partition_point(|s| *s <= atom) as f64;
    (below / n).max(1.0 - at_or_below / n)
}

/// Two-sample KS statistic.
pub fn ks_two_sample(a: &EmpiricalMeasure1D, b: &EmpiricalMeasure1D) -> f64 {
    let (xa, xb) = (a.samples(), b.samples());
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Time-weighted samples of one trajectory after a burn-in.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationMeasure {
    pub samples: Vec<State3>,
    pub weights: Vec<f64>,
}

impl OccupationMeasure {
    /// Trapezoid weights over the recorded points with `t >= burn_in_frac * T`.
    pub fn from_trajectory(traj: &Trajectory, burn_in_frac: f64) -> Result<Self> {
        let (start, stop) = window_indices(traj, burn_in_frac)?;
        let times = &traj.times[start..stop];
        let total = times[times.len() - 1] - times[0];
        let mut weights = vec![0.0; times.len()];
        for (k, w) in times.windows(2).enumerate() {
            let half = 0.5 * (w[1] - w[0]) / total;
            weights[k] += half;
            weights[k + 1] += half;
        }
        Ok(OccupationMeasure {
            samples: traj.states[start..stop].to_vec(),
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn expectation(&self, f: impl Fn(&State3) -> f64) -> f64 {
        self.samples.iter().zip(&self.weights).map(|(s, w)| w * f(s)).sum()
    }

    /// KS distance between the weighted marginal of `coordinate` and `law`.
    pub fn marginal_ks(&self, coordinate: usize, law: &GaussianLaw1D) -> Result<f64> {
        if !(law.variance > 0.0) {
            return Err(Error::invalid("KS distance needs a law with positive variance"));
        }
        let mut pairs: Vec<(f64, f64)> = self
            .samples
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| (s.coord(coordinate), *w))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total = self.total_weight();
        let mut below = 0.0;
        let mut d: f64 = 0.0;
        let mut i = 0;
        while i < pairs.len() {
            let x = pairs[i].0;
            let mut mass = 0.0;
            while i < pairs.len() && pairs[i].0 == x {
                mass += pairs[i].1;
                i += 1;
            }
            let f = law.cdf(x);
            d = d.max(f - below / total);
            below += mass;
            d = d.max(below / total - f);
        }
        Ok(d.clamp(0.0, 1.0))
    }
}

fn window_indices(traj: &Trajectory, burn_in_frac: f64) -> Result<(usize, usize)> {
    if !(0.0..1.0).contains(&burn_in_frac) {
        return Err(Error::invalid(format!(
            "burn-in fraction must lie in [0, 1), got {burn_in_frac}"
        )));
    }
    let t0 = burn_in_frac * traj.final_time();
    let start = traj.times.partition_point(|t| *t < t0);
    if traj.len() - start < 2 {
        return Err(Error::invalid("fewer than two recorded points after burn-in"));
    }
    Ok((start, traj.len()))
}

/// Trapezoid average of `f` over the recorded points with `t in [t_start, t_stop]`.
fn window_average(traj: &Trajectory, t_start: f64, t_stop: f64, f: impl Fn(&State3) -> f64) -> Result<f64> {
    let start = traj.times.partition_point(|t| *t < t_start);
    let stop = traj.times.partition_point(|t| *t <= t_stop);
    if stop < start + 2 {
        return Err(Error::invalid(format!(
            "fewer than two recorded points in [{t_start}, {t_stop}]"
        )));
    }
    let times = &traj.times[start..stop];
    let values: Vec<f64> = traj.states[start..stop].iter().map(f).collect();
    let integral: f64 = times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum();
    Ok(integral / (times[times.len() - 1] - times[0]))
}

/// Time average of `X = u2^2 + u3^2` after the burn-in.
pub fn time_average_x(traj: &Trajectory, burn_in_frac: f64) -> Result<f64> {
    let (start, _) = window_indices(traj, burn_in_frac)?;
    window_average(traj, traj.times[start], traj.final_time(), State3::x)
}

/// Outcome of the time-averaged transverse-energy lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct E55Check {
    /// `l1 * rho`.
    pub bound: f64,
    /// Minimum over the four quarter windows after burn-in (finite-horizon
    /// stand-in for the liminf).
    pub observed: f64,
    pub window_averages: [f64; 4],
    /// Average over the whole post-burn-in window.
    pub time_average: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// `0.8 * (kappa / l1 - min(l2, l3))`, inside the admissible open interval.
pub fn default_rho(params: &MineaParams) -> f64 {
    DEFAULT_RHO_FRACTION * admissible_rho_limit(params)
}

fn admissible_rho_limit(params: &MineaParams) -> f64 {
    params.kappa / params.lambda1() - params.lambda[1].min(params.lambda[2])
}

pub fn e55_check(traj: &Trajectory, params: &MineaParams, rho: f64) -> Result<E55Check> {
    e55_check_with(traj, params, rho, DEFAULT_E55_TOLERANCE, DEFAULT_BURN_IN)
}

pub fn e55_check_with(
    traj: &Trajectory,
    params: &MineaParams,
    rho: f64,
    tolerance: f64,
    burn_in_frac: f64,
) -> Result<E55Check> {
    let limit = admissible_rho_limit(params);
    if !(rho > 0.0 && rho < limit) {
        return Err(Error::invalid(format!(
            "rho = {rho} outside the admissible interval (0, {limit})"
        )));
    }
    let (start, _) = window_indices(traj, burn_in_frac)?;
    let t0 = traj.times[start];
    let t1 = traj.final_time();
    let quarter = (t1 - t0) / 4.0;
    let mut window_averages = [0.0; 4];
    for (q, slot) in window_averages.iter_mut().enumerate() {
        let a = t0 + q as f64 * quarter;
        let b = if q == 3 { t1 } else { t0 + (q + 1) as f64 * quarter };
        *slot = window_average(traj, a, b, State3::x)?;
    }
    let observed = window_averages.iter().copied().fold(f64::INFINITY, f64::min);
    let bound = params.lambda1() * rho;
    Ok(E55Check {
        bound,
        observed,
        window_averages,
        time_average: window_average(traj, t0, t1, State3::x)?,
        tolerance,
        pass: observed >= bound * (1.0 - tolerance),
    })
}

/// Everything that fixes an ensemble of independent paths except the
/// trajectory indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec {
    pub params: MineaParams,
    pub initial: State3,
    pub t_end: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub seed: u64,
}

impl EnsembleSpec {
    fn stepper(&self) -> Result<(Stepper, usize)> {
        Ok((
            Stepper::new(&self.params, self.dt, self.scheme)?,
            step_count(self.t_end, self.dt)?,
        ))
    }
}

/// Final states of the trajectories `indices`, in index order. The first
/// failing trajectory (lowest index) determines the error.
pub fn ensemble_endpoints(spec: &EnsembleSpec, indices: Range<u64>) -> Result<Vec<State3>> {
    let (stepper, n_steps) = spec.stepper()?;
    let results: Vec<Result<State3>> = indices
        .into_par_iter()
        .map(|i| {
            let mut stream = make_stream(spec.seed, i);
            propagate(&stepper, spec.initial, n_steps, &mut stream, |_, _, _| {}).map_err(|e| e.with_trajectory(i))
        })
        .collect();
    results.into_iter().collect()
}

/// Ensemble mean of `f(u(t))` at every `record_stride`-th step, together with
/// the recording times.
pub fn ensemble_mean_path(
    spec: &EnsembleSpec,
    n_traj: u64,
    record_stride: usize,
    f: impl Fn(&State3) -> f64 + Sync,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (stepper, n_steps) = spec.stepper()?;
    if record_stride == 0 {
        return Err(Error::invalid("record_stride must be at least 1"));
    }
    let keep = |k: usize| k % record_stride == 0 || k == n_steps;
    let times: Vec<f64> = (0..=n_steps).filter(|k| keep(*k)).map(|k| k as f64 * spec.dt).collect();
    let paths: Vec<Result<Vec<f64>>> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut stream = make_stream(spec.seed, i);
            let mut values = Vec::with_capacity(times.len());
            propagate(&stepper, spec.initial, n_steps, &mut stream, |k, _, u| {
                if keep(k) {
                    values.push(f(u));
                }
            })
            .map_err(|e| e.with_trajectory(i))?;
            Ok(values)
        })
        .collect();
    let mut means = vec![0.0; times.len()];
    for path in paths {
        for (m, v) in means.iter_mut().zip(path?) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n_traj as f64);
    Ok((times, means))
}

/// Law of coordinate `coordinate` of `u(T; v)` over `n_traj` exp-scheme paths.
pub fn ensemble_law(
    params: &MineaParams,
    v: State3,
    t_end: f64,
    dt: f64,
    n_traj: usize,
    seed: u64,
    coordinate: usize,
) -> Result<EmpiricalMeasure1D> {
    if n_traj < 2 {
        return Err(Error::invalid("an ensemble needs at least two trajectories"));
    }
    if !(1..=3).contains(&coordinate) {
        return Err(Error::invalid(format!(
            "coordinate must be 1, 2 or 3, got {coordinate}"
        )));
    }
    let spec = EnsembleSpec {
        params: *params,
        initial: v,
        t_end,
        dt,
        scheme: Scheme::ExpSplitting,
        seed,
    };
    let ends = ensemble_endpoints(&spec, 0..n_traj as u64)?;
    EmpiricalMeasure1D::new(ends.iter().map(|u| u.coord(coordinate)).collect())
}

/// Comparison of the `u1` endpoint laws started in the two basins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualBasinReport {
    /// Started at the origin, on the Gaussian-law axis.
    pub law_a: EmpiricalMeasure1D,
    /// Started at unit amplitude on the slower transverse axis.
    pub law_b: EmpiricalMeasure1D,
    pub mean_a: f64,
    pub mean_b: f64,
    pub ks_between: f64,
    /// Two-sample critical value at the 0.1% level.
    pub critical: f64,
    pub separated: bool,
}

/// Level of the two-sample test in [`dual_basin_experiment`].
pub const SEPARATION_ALPHA: f64 = 0.001;

/// Basin A uses streams `0..n_traj`, basin B streams `n_traj..2 n_traj`.
pub fn dual_basin_experiment(
    params: &MineaParams,
    t_end: f64,
    dt: f64,
    n_traj: usize,
    seed: u64,
) -> Result<DualBasinReport> {
    let regime = uniqueness_regime(params)?;
    if regime.regime != Regime::Supercritical {
        return Err(Error::invalid(format!(
            "dual-basin experiment needs kappa > {} (got {}, {})",
            regime.threshold, params.kappa, regime.regime
        )));
    }
    if n_traj < 2 {
        return Err(Error::invalid("an ensemble needs at least two trajectories"));
    }
    let n = n_traj as u64;
    let mut start_b = State3::default();
    if params.slow_transverse_axis() == 1 {
        start_b.u2 = 1.0;
    } else {
        start_b.u3 = 1.0;
    }
    let spec_a = EnsembleSpec {
        params: *params,
        initial: State3::default(),
        t_end,
        dt,
        scheme: Scheme::ExpSplitting,
        seed,
    };
    let spec_b = EnsembleSpec {
        initial: start_b,
        ..spec_a
    };
    let law_a = EmpiricalMeasure1D::new(ensemble_endpoints(&spec_a, 0..n)?.iter().map(|u| u.u1).collect())?;
    let law_b = EmpiricalMeasure1D::new(ensemble_endpoints(&spec_b, n..2 * n)?.iter().map(|u| u.u1).collect())?;
    let ks_between = ks_two_sample(&law_a, &law_b);
    let critical = ks_critical_two_sample(SEPARATION_ALPHA, law_a.len(), law_b.len());
    Ok(DualBasinReport {
        mean_a: law_a.mean(),
        mean_b: law_b.mean(),
        ks_between,
        critical,
        separated: ks_between > critical,
        law_a,
        law_b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    UniqueLike,
    MultiLike,
    Inconclusive,
    Error,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::UniqueLike => "unique-like",
            Verdict::MultiLike => "multi-like",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseScanConfig {
    pub lambda: [f64; 3],
    pub kappas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub initial: State3,
    pub burn_in_frac: f64,
    pub record_stride: usize,
}

impl PhaseScanConfig {
    pub fn new(
        lambda: [f64; 3],
        kappas: Vec<f64>,
        sigmas: Vec<f64>,
        t_end: f64,
        dt: f64,
        n_traj: usize,
        seed: u64,
    ) -> Self {
        PhaseScanConfig {
            lambda,
            kappas,
            sigmas,
            t_end,
            dt,
            n_traj,
            seed,
            initial: State3::new(0.0, 1.0, 1.0),
            burn_in_frac: DEFAULT_BURN_IN,
            record_stride: 10,
        }
    }
}

/// One `(kappa, sigma)` cell of a phase scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseScanRow {
    pub kappa: f64,
    pub sigma: f64,
    pub regime: Regime,
    /// KS distance of the `u1` endpoint ensemble to the Gaussian first marginal.
    pub ks_u1: f64,
    /// Ensemble mean of the post-burn-in time average of `X`.
    pub timeavg_x: f64,
    /// `l1 * rho` with the default `rho`; only defined above the threshold.
    pub e55_bound: Option<f64>,
    pub verdict: Verdict,
    pub error: Option<String>,
}

/// Level of the KS test behind the unique-like verdict.
pub const UNIQUE_KS_ALPHA: f64 = 0.01;
/// Time-averaged `X` below which a cell can be called unique-like.
pub const UNIQUE_X_THRESHOLD: f64 = 0.01;
/// Fraction of trajectories that must pass the time-average bound for a
/// multi-like verdict.
pub const MULTI_PASS_FRACTION: f64 = 0.95;

pub fn phase_scan(cfg: &PhaseScanConfig) -> Result<Vec<PhaseScanRow>> {
    phase_scan_with_cancel(cfg, &AtomicBool::new(false))
}

/// Like [`phase_scan`], but cells not yet started when `cancel` is raised are
/// skipped; the completed cells come back in grid order.
pub fn phase_scan_with_cancel(cfg: &PhaseScanConfig, cancel: &AtomicBool) -> Result<Vec<PhaseScanRow>> {
    if cfg.kappas.is_empty() || cfg.sigmas.is_empty() {
        return Err(Error::invalid("phase scan grids must be non-empty"));
    }
    if cfg.n_traj < 2 {
        return Err(Error::invalid("phase scan needs at least two trajectories per cell"));
    }
    // validate the shared parameters once so that bad input is not reported
    // as per-cell failures
    let probe = MineaParams::new(
        cfg.lambda[0],
        cfg.lambda[1],
        cfg.lambda[2],
        cfg.kappas[0],
        cfg.sigmas[0],
    )?;
    step_count(cfg.t_end, cfg.dt)?;
    let cells: Vec<(u64, f64, f64)> = cfg
        .kappas
        .iter()
        .flat_map(|k| cfg.sigmas.iter().map(move |s| (*k, *s)))
        .enumerate()
        .map(|(i, (k, s))| (i as u64, k, s))
        .collect();
    let rows: Vec<Option<PhaseScanRow>> = cells
        .par_iter()
        .map(|&(cell, kappa, sigma)| {
            if cancel.load(Ordering::SeqCst) {
                return None;
            }
            let row = match probe.with_kappa_sigma(kappa, sigma) {
                Ok(params) => scan_cell(cfg, &params, cell).unwrap_or_else(|e| PhaseScanRow {
                    kappa,
                    sigma,
                    regime: uniqueness_regime(&params).map(|r| r.regime).unwrap_or(Regime::Boundary),
                    ks_u1: f64::NAN,
                    timeavg_x: f64::NAN,
                    e55_bound: None,
                    verdict: Verdict::Error,
                    error: Some(e.to_string()),
                }),
                Err(e) => PhaseScanRow {
                    kappa,
                    sigma,
                    regime: Regime::Boundary,
                    ks_u1: f64::NAN,
                    timeavg_x: f64::NAN,
                    e55_bound: None,
                    verdict: Verdict::Error,
                    error: Some(e.to_string()),
                },
            };
            Some(row)
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

fn scan_cell(cfg: &PhaseScanConfig, params: &MineaParams, cell: u64) -> Result<PhaseScanRow> {
    let regime = uniqueness_regime(params)?.regime;
    let rho = (regime == Regime::Supercritical).then(|| default_rho(params));
    let mut endpoints = Vec::with_capacity(cfg.n_traj);
    let mut timeavg_sum = 0.0;
    let mut passes = 0usize;
    for i in 0..cfg.n_traj as u64 {
        let mut stream = make_stream(cfg.seed, (cell << 32) | i);
        let traj = simulate(
            params,
            cfg.initial,
            cfg.t_end,
            cfg.dt,
            Scheme::ExpSplitting,
            &mut stream,
            cfg.record_stride,
        )?;
        endpoints.push(traj.final_state().u1);
        timeavg_sum += time_average_x(&traj, cfg.burn_in_frac)?;
        if let Some(rho) = rho {
            if e55_check_with(&traj, params, rho, DEFAULT_E55_TOLERANCE, cfg.burn_in_frac)?.pass {
                passes += 1;
            }
        }
    }
    let emp = EmpiricalMeasure1D::new(endpoints)?;
    let first = gaussian_invariant(params)?.first;
    let ks_u1 = if first.is_point_mass() {
        ks_distance_point_mass(&emp, first.mean)
    } else {
        ks_distance(&emp, &first)?
    };
    let timeavg_x = timeavg_sum / cfg.n_traj as f64;
    let critical = ks_critical_one_sample(UNIQUE_KS_ALPHA, emp.len());
    let pass_fraction = passes as f64 / cfg.n_traj as f64;
    let verdict = if regime == Regime::Boundary {
        Verdict::Inconclusive
    } else if timeavg_x < UNIQUE_X_THRESHOLD && ks_u1 < critical {
        Verdict::UniqueLike
    } else if rho.is_some() && pass_fraction >= MULTI_PASS_FRACTION {
        Verdict::MultiLike
    } else {
        Verdict::Inconclusive
    };
    Ok(PhaseScanRow {
        kappa: params.kappa,
        sigma: params.sigma,
        regime,
        ks_u1,
        timeavg_x,
        e55_bound: rho.map(|r| params.lambda1() * r),
        verdict,
        error: None,
    })
}
