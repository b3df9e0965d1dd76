//! The three-dimensional Minea system
//!
//! ```text
//! du1 = (-l1 u1 - (u2^2 + u3^2) + kappa) dt + sigma dW
//! du2 = (-l2 u2 + u1 u2) dt
//! du3 = (-l3 u3 + u1 u3) dt
//! ```
//!
//! Noise enters only the first coordinate, so the `u1` axis is invariant and
//! carries a Gaussian invariant law. Whether that law is the only one depends
//! on where `kappa` sits relative to `l1 * min(l2, l3)`.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{abs_moment, ou_stationary_law, GaussianLaw1D, OuTransition, RngStream};

/// States whose Euclidean norm exceeds this are reported as blow-up.
pub const BLOW_UP_CAP: f64 = 1e8;

/// Relative tolerance used to call `kappa` equal to the threshold.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// Number of witness points reported for a circle of stationary points.
pub const CIRCLE_WITNESSES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MineaParams {
    pub lambda: [f64; 3],
    pub kappa: f64,
    pub sigma: f64,
}

impl MineaParams {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64, kappa: f64, sigma: f64) -> Result<Self> {
        let p = MineaParams {
            lambda: [lambda1, lambda2, lambda3],
            kappa,
            sigma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, l) in self.lambda.iter().enumerate() {
            if !(*l > 0.0) || !l.is_finite() {
                return Err(Error::invalid(format!("lambda{} must be positive, got {l}", i + 1)));
            }
        }
        if !self.kappa.is_finite() {
            return Err(Error::invalid(format!("kappa must be finite, got {}", self.kappa)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!(
                "sigma must be non-negative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda[0]
    }

    /// `l1 * min(l2, l3)`: the uniqueness threshold for `kappa`.
    pub fn threshold(&self) -> f64 {
        self.lambda[0] * self.lambda[1].min(self.lambda[2])
    }

    /// `min(l1, l2, l3)`.
    pub fn min_rate(&self) -> f64 {
        self.lambda.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Index (1 or 2, zero-based) of the slower of the two transverse modes.
    /// Ties pick `u2`.
    pub fn slow_transverse_axis(&self) -> usize {
        if self.lambda[1] <= self.lambda[2] {
            1
        } else {
            2
        }
    }

    pub fn with_kappa_sigma(&self, kappa: f64, sigma: f64) -> Result<Self> {
        MineaParams::new(self.lambda[0], self.lambda[1], self.lambda[2], kappa, sigma)
    }

    /// Ceiling on `E|u(t)|^2` from the Lyapunov inequality
    /// `d E|u|^2 <= (-rho E|u|^2 + kappa^2 / rho + sigma^2) dt`, valid for all `t`.
    pub fn moment_ceiling(&self, v: &State3) -> f64 {
        let rho = self.min_rate();
        let c = self.kappa * self.kappa / rho + self.sigma * self.sigma;
        v.norm_sq() + c / rho
    }
}

/// A point of `R^3`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State3 {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
}

impl State3 {
    pub const fn new(u1: f64, u2: f64, u3: f64) -> Self {
        State3 { u1, u2, u3 }
    }

    /// Canonical basis vector `f_i`, `i` in `1..=3`.
    pub fn basis(i: usize) -> Self {
        match i {
            1 => State3::new(1.0, 0.0, 0.0),
            2 => State3::new(0.0, 1.0, 0.0),
            3 => State3::new(0.0, 0.0, 1.0),
            _ => panic!("basis index must be 1, 2 or 3"),
        }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        State3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.u1, self.u2, self.u3]
    }

    /// Coordinate `i` in `1..=3`.
    pub fn coord(&self, i: usize) -> f64 {
        match i {
            1 => self.u1,
            2 => self.u2,
            3 => self.u3,
            _ => panic!("coordinate index must be 1, 2 or 3"),
        }
    }

    /// Transverse energy `u2^2 + u3^2`.
    pub fn x(&self) -> f64 {
        self.u2 * self.u2 + self.u3 * self.u3
    }

    pub fn dot(&self, other: &State3) -> f64 {
        self.u1 * other.u1 + self.u2 * other.u2 + self.u3 * other.u3
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.u1.is_finite() && self.u2.is_finite() && self.u3.is_finite()
    }
}

impl Add for State3 {
    type Output = State3;
    fn add(self, o: State3) -> State3 {
        State3::new(self.u1 + o.u1, self.u2 + o.u2, self.u3 + o.u3)
    }
}

impl Sub for State3 {
    type Output = State3;
    fn sub(self, o: State3) -> State3 {
        State3::new(self.u1 - o.u1, self.u2 - o.u2, self.u3 - o.u3)
    }
}

impl Mul<f64> for State3 {
    type Output = State3;
    fn mul(self, s: f64) -> State3 {
        State3::new(self.u1 * s, self.u2 * s, self.u3 * s)
    }
}

/// Trilinear form `b(u, v, w) = -(u2 v2 + u3 v3) w1 + u2 v1 w2 + u3 v1 w3`.
pub fn b_form(u: &State3, v: &State3, w: &State3) -> f64 {
    -(u.u2 * v.u2 + u.u3 * v.u3) * w.u1 + u.u2 * v.u1 * w.u2 + u.u3 * v.u1 * w.u3
}

/// The bilinear map with `<B(u, v), w> = b(u, v, w)`.
pub fn bilinear(u: &State3, v: &State3) -> State3 {
    State3::new(-(u.u2 * v.u2 + u.u3 * v.u3), u.u2 * v.u1, u.u3 * v.u1)
}

/// Deterministic part of the vector field.
pub fn drift(params: &MineaParams, u: &State3) -> Result<State3> {
    if !u.is_finite() {
        return Err(Error::InvalidState(format!("non-finite state {u:?}")));
    }
    Ok(drift_unchecked(params, u))
}

#[inline]
fn drift_unchecked(p: &MineaParams, u: &State3) -> State3 {
    State3::new(
        -p.lambda[0] * u.u1 - (u.u2 * u.u2 + u.u3 * u.u3) + p.kappa,
        -p.lambda[1] * u.u2 + u.u1 * u.u2,
        -p.lambda[2] * u.u3 + u.u1 * u.u3,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Scheme {
    /// Euler-Maruyama, kept as an independent cross-check.
    #[serde(rename = "em")]
    EulerMaruyama,
    /// OU transition for `u1` with the transverse source frozen, exact
    /// exponential update of `u2`, `u3` with the trapezoidal mean of `u1`.
    #[default]
    #[serde(rename = "exp")]
    ExpSplitting,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::EulerMaruyama => "em",
            Scheme::ExpSplitting => "exp",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "em" => Ok(Scheme::EulerMaruyama),
            "exp" => Ok(Scheme::ExpSplitting),
            other => Err(Error::invalid(format!("unknown scheme '{other}' (expected em or exp)"))),
        }
    }
}

/// Fixed-step integrator with all step-size dependent constants hoisted.
///
/// Both schemes consume exactly one standard normal draw per step; the
/// Euler-Maruyama increment is `sqrt(dt) * gauss`, so feeding the same draws
/// to both schemes drives them with the same Brownian path.
#[derive(Debug, Clone)]
pub struct Stepper {
    params: MineaParams,
    dt: f64,
    scheme: Scheme,
    sqrt_dt: f64,
    ou: OuTransition,
    source_gain: f64,
    transverse_decay: [f64; 2],
}

impl Stepper {
    pub fn new(params: &MineaParams, dt: f64, scheme: Scheme) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("dt must be positive and finite, got {dt}")));
        }
        let l1 = params.lambda[0];
        Ok(Stepper {
            params: *params,
            dt,
            scheme,
            sqrt_dt: dt.sqrt(),
            ou: OuTransition::new(dt, l1, params.kappa, params.sigma)?,
            source_gain: -(-l1 * dt).exp_m1() / l1,
            transverse_decay: [(-params.lambda[1] * dt).exp(), (-params.lambda[2] * dt).exp()],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn params(&self) -> &MineaParams {
        &self.params
    }

    /// One step without the blow-up check.
    #[inline]
    pub fn advance(&self, u: &State3, gauss: f64) -> State3 {
        match self.scheme {
            Scheme::EulerMaruyama => {
                let d = drift_unchecked(&self.params, u);
                State3::new(
                    u.u1 + d.u1 * self.dt + self.params.sigma * self.sqrt_dt * gauss,
                    u.u2 + d.u2 * self.dt,
                    u.u3 + d.u3 * self.dt,
                )
            }
            Scheme::ExpSplitting => {
                let x = u.x();
                let u1 = self.ou.apply(u.u1, gauss) - x * self.source_gain;
                let mean_u1 = 0.5 * (u.u1 + u1);
                let growth = (mean_u1 * self.dt).exp();
                State3::new(
                    u1,
                    u.u2 * (growth * self.transverse_decay[0]),
                    u.u3 * (growth * self.transverse_decay[1]),
                )
            }
        }
    }

    /// One step; a non-finite result or one beyond [`BLOW_UP_CAP`] is an error
    /// tagged with `step` and the time it would have reached.
    #[inline]
    pub fn step(&self, u: &State3, gauss: f64, step: usize) -> Result<State3> {
        let next = self.advance(u, gauss);
        if !next.is_finite() || next.norm_sq() > BLOW_UP_CAP * BLOW_UP_CAP {
            return Err(Error::BlowUp {
                step,
                time: step as f64 * self.dt,
                trajectory: None,
            });
        }
        Ok(next)
    }
}

/// Single Euler-Maruyama step driven by the Wiener increment `dw`.
pub fn step_em(params: &MineaParams, u: &State3, dt: f64, dw: f64) -> Result<State3> {
    let stepper = Stepper::new(params, dt, Scheme::EulerMaruyama)?;
    stepper.step(u, dw / stepper.sqrt_dt, 1)
}

/// Single exponential-splitting step driven by the standard normal `gauss`.
pub fn step_exp(params: &MineaParams, u: &State3, dt: f64, gauss: f64) -> Result<State3> {
    Stepper::new(params, dt, Scheme::ExpSplitting)?.step(u, gauss, 1)
}

/// A recorded sample path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State3>,
    pub params: MineaParams,
    pub scheme: Scheme,
    pub dt: f64,
    pub seed: u64,
    pub stream_index: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> State3 {
        *self.states.last().expect("trajectory always holds the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory always holds the initial state")
    }
}

/// Number of steps of size `dt` that best covers `[0, t_end]`.
pub fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::invalid(format!(
            "t_end must be positive and finite, got {t_end}"
        )));
    }
    if !(dt > 0.0) || dt > t_end {
        return Err(Error::invalid(format!("need 0 < dt <= t_end, got dt = {dt}")));
    }
    Ok(((t_end / dt).round() as usize).max(1))
}

/// Drive the system from `v` for `n_steps`, calling `observe(step, t, state)`
/// after every step (and once for the initial state with step 0). Returns the
/// final state.
pub fn propagate<F>(
    stepper: &Stepper,
    v: State3,
    n_steps: usize,
    stream: &mut RngStream,
    mut observe: F,
) -> Result<State3>
where
    F: FnMut(usize, f64, &State3),
{
    if !v.is_finite() {
        return Err(Error::InvalidState(format!("non-finite initial state {v:?}")));
    }
    let dt = stepper.dt();
    let mut u = v;
    observe(0, 0.0, &u);
    for k in 1..=n_steps {
        u = stepper.step(&u, stream.standard_normal(), k)?;
        observe(k, k as f64 * dt, &u);
    }
    Ok(u)
}

/// Simulate one path, recording every `record_stride` steps plus the final
/// step.
pub fn simulate(
    params: &MineaParams,
    v: State3,
    t_end: f64,
    dt: f64,
    scheme: Scheme,
    stream: &mut RngStream,
    record_stride: usize,
) -> Result<Trajectory> {
    if record_stride == 0 {
        return Err(Error::invalid("record_stride must be at least 1"));
    }
    let n_steps = step_count(t_end, dt)?;
    let stepper = Stepper::new(params, dt, scheme)?;
    let capacity = n_steps / record_stride + 2;
    let mut times = Vec::with_capacity(capacity);
    let mut states = Vec::with_capacity(capacity);
    propagate(&stepper, v, n_steps, stream, |k, t, u| {
        if k % record_stride == 0 || k == n_steps {
            times.push(t);
            states.push(*u);
        }
    })
    .map_err(|e| e.with_trajectory(stream.stream_index()))?;
    Ok(Trajectory {
        times,
        states,
        params: *params,
        scheme,
        dt,
        seed: stream.seed(),
        stream_index: stream.stream_index(),
    })
}

/// One connected family of stationary points of the deterministic system.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StationaryBranch {
    /// `(kappa / l1, 0, 0)`, present for every parameter set.
    Origin { point: State3 },
    /// `u1 = l2 = l3`, `u2^2 + u3^2 = radius_sq`, reported with equally spaced
    /// witness points.
    Circle {
        u1: f64,
        radius_sq: f64,
        witnesses: Vec<State3>,
    },
    /// `u1 = l_axis`, `u_axis = +-sqrt(amplitude_sq)`, the other transverse
    /// coordinate zero. `axis` is 2 or 3.
    AxisPair {
        axis: usize,
        u1: f64,
        amplitude_sq: f64,
        points: [State3; 2],
    },
}

impl StationaryBranch {
    pub fn witnesses(&self) -> Vec<State3> {
        match self {
            StationaryBranch::Origin { point } => vec![*point],
            StationaryBranch::Circle { witnesses, .. } => witnesses.clone(),
            StationaryBranch::AxisPair { points, .. } => points.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarySet {
    pub branches: Vec<StationaryBranch>,
}

impl StationarySet {
    pub fn witnesses(&self) -> impl Iterator<Item = State3> + '_ {
        self.branches.iter().flat_map(|b| b.witnesses())
    }

    /// Largest drift norm over all witness points.
    pub fn max_residual(&self, params: &MineaParams) -> f64 {
        self.witnesses()
            .map(|p| drift_unchecked(params, &p).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_unique(&self) -> bool {
        self.branches.len() == 1
    }
}

/// All stationary points of the noiseless system.
///
/// Besides the origin branch, a transverse mode `j` can carry a stationary
/// amplitude only with `u1 = l_j`, which requires `kappa > l1 l_j`. When
/// `l2 == l3` the two modes merge into a circle.
pub fn stationary_points(params: &MineaParams) -> Result<StationarySet> {
    params.validate()?;
    let [l1, l2, l3] = params.lambda;
    let kappa = params.kappa;
    let mut branches = vec![StationaryBranch::Origin {
        point: State3::new(kappa / l1, 0.0, 0.0),
    }];
    if l2 == l3 {
        let radius_sq = kappa - l1 * l2;
        if radius_sq > 0.0 {
            let r = radius_sq.sqrt();
            let witnesses = (0..CIRCLE_WITNESSES)
                .map(|i| {
                    let theta = 2.0 * std::f64::consts::PI * i as f64 / CIRCLE_WITNESSES as f64;
                    State3::new(l2, r * theta.cos(), r * theta.sin())
                })
                .collect();
            branches.push(StationaryBranch::Circle {
                u1: l2,
                radius_sq,
                witnesses,
            });
        }
    } else {
        for (axis, lj) in [(2usize, l2), (3usize, l3)] {
            let amplitude_sq = kappa - l1 * lj;
            if amplitude_sq > 0.0 {
                let a = amplitude_sq.sqrt();
                let point = |s: f64| {
                    if axis == 2 {
                        State3::new(lj, s * a, 0.0)
                    } else {
                        State3::new(lj, 0.0, s * a)
                    }
                };
                branches.push(StationaryBranch::AxisPair {
                    axis,
                    u1: lj,
                    amplitude_sq,
                    points: [point(1.0), point(-1.0)],
                });
            }
        }
    }
    Ok(StationarySet { branches })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `kappa < l1 min(l2, l3)`: the Gaussian law is the unique invariant law.
    Subcritical,
    /// `kappa` equal to the threshold within [`BOUNDARY_TOLERANCE`]; no claim.
    Boundary,
    /// `kappa > l1 min(l2, l3)`: a second, non-Gaussian invariant law exists.
    Supercritical,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Subcritical => "subcritical",
            Regime::Boundary => "boundary",
            Regime::Supercritical => "supercritical",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeClassification {
    pub threshold: f64,
    pub regime: Regime,
    /// `2 E|Z|` under the Gaussian first marginal.
    pub e56_lhs: f64,
    /// `min(l1, l2, l3)`.
    pub e56_rhs: f64,
    pub e56_satisfied: bool,
}

pub fn uniqueness_regime(params: &MineaParams) -> Result<RegimeClassification> {
    params.validate()?;
    let threshold = params.threshold();
    let regime = if (params.kappa - threshold).abs() <= BOUNDARY_TOLERANCE * threshold.abs().max(1.0) {
        Regime::Boundary
    } else if params.kappa < threshold {
        Regime::Subcritical
    } else {
        Regime::Supercritical
    };
    let law = ou_stationary_law(params.lambda1(), params.kappa, params.sigma)?;
    let e56_lhs = 2.0 * abs_moment(&law)?;
    let e56_rhs = params.min_rate();
    Ok(RegimeClassification {
        threshold,
        regime,
        e56_lhs,
        e56_rhs,
        e56_satisfied: e56_lhs < e56_rhs,
    })
}

/// Product law `N(kappa/l1, sigma^2/(2 l1)) x delta_0 x delta_0`; the point
/// masses are stored as zero-variance Gaussians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProductInvariantLaw {
    pub first: GaussianLaw1D,
    pub second: GaussianLaw1D,
    pub third: GaussianLaw1D,
}

impl ProductInvariantLaw {
    pub fn marginal(&self, coordinate: usize) -> GaussianLaw1D {
        match coordinate {
            1 => self.first,
            2 => self.second,
            3 => self.third,
            _ => panic!("coordinate index must be 1, 2 or 3"),
        }
    }
}

pub fn gaussian_invariant(params: &MineaParams) -> Result<ProductInvariantLaw> {
    let first = ou_stationary_law(params.lambda1(), params.kappa, params.sigma)?;
    let atom = GaussianLaw1D::new(0.0, 0.0)?;
    Ok(ProductInvariantLaw {
        first,
        second: atom,
        third: atom,
    })
}
