//! Galerkin truncation of the 2D stochastic Navier-Stokes equations on the
//! torus `[0, 2 pi)^2` with forcing and noise on a single Stokes eigenmode.
//!
//! A divergence-free field is stored as one complex amplitude per wavevector
//! of the half lattice `k1 > 0 || (k1 == 0 && k2 > 0)`, `max(|k1|, |k2|) <= N`:
//!
//! ```text
//! u(x) = sum_k c_k p(k) e^{i k.x},    p(k) = s(k) k_perp / |k|,    k_perp = (-k2, k1)
//! ```
//!
//! with `s(k) = +1` on the stored half and `-1` on its mirror, so `p(-k) = p(k)`
//! and reality reads `c_{-k} = conj(c_k)`. Mirror amplitudes are synthesized on
//! demand, which makes reality exact. The `H` inner product is the normalized
//! integral `(2 pi)^-2 \int u.w dx = sum_k c_k conj(d_k)`, so a single stored
//! amplitude `c` has `|u|_H^2 = 2 |c|^2`.
//!
//! The evolution is taken in dissipative form,
//! `du = (-mu A u - B(u, u) + kappa e) dt + sigma e dW`.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{ks_distance, ks_distance_point_mass, EmpiricalMeasure1D};
use crate::noise::{make_stream, ou_stationary_law, BrownianIncrements, OuTransition, RngStream};

/// Fields whose `H` norm exceeds this are reported as blow-up.
pub const NSE_BLOW_UP_CAP: f64 = 1e8;

/// Largest value of `kappa^2 / (lambda mu^4) + sigma^2 / (2 mu^3)` accepted by
/// [`small_noise_convergence`].
pub const SMALL_NOISE_GATE: f64 = 0.01;

/// Nonzero integer wavevector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Wavevector {
    pub k1: i32,
    pub k2: i32,
}

impl Wavevector {
    pub fn new(k1: i32, k2: i32) -> Result<Self> {
        if k1 == 0 && k2 == 0 {
            return Err(Error::invalid("the zero wavevector carries no mean-zero field"));
        }
        Ok(Wavevector { k1, k2 })
    }

    /// `|k|^2`, the Stokes eigenvalue.
    pub fn norm_sq(&self) -> f64 {
        let (a, b) = (self.k1 as i64, self.k2 as i64);
        (a * a + b * b) as f64
    }

    pub fn linf(&self) -> usize {
        self.k1.unsigned_abs().max(self.k2.unsigned_abs()) as usize
    }

    /// Whether `k` lies on the stored half lattice.
    pub fn is_stored(&self) -> bool {
        self.k1 > 0 || (self.k1 == 0 && self.k2 > 0)
    }

    fn neg(self) -> Self {
        Wavevector {
            k1: -self.k1,
            k2: -self.k2,
        }
    }
}

/// Mode tables for one truncation radius, shared by every field built on it.
#[derive(Debug)]
pub struct Truncation {
    n: usize,
    /// Stored half lattice in canonical order.
    modes: Vec<Wavevector>,
    eigenvalues: Vec<f64>,
    /// `(k1 + n, k2 + n)` grid -> index into the full lattice, `u32::MAX` for 0.
    lookup: Vec<u32>,
    /// Triad table: for full-lattice index `p`, all `(q, k, weight)` with
    /// `p + q = k`, `k` stored, and nonzero weight.
    triads: Vec<Vec<Triad>>,
}

#[derive(Debug, Clone, Copy)]
struct Triad {
    q: u32,
    k: u32,
    weight: f64,
}

impl Truncation {
    pub fn new(n: usize) -> Result<Arc<Self>> {
        if n == 0 {
            return Err(Error::invalid("truncation radius must be at least 1"));
        }
        if n > 64 {
            return Err(Error::invalid(format!("truncation radius {n} is beyond desk scale")));
        }
        let ni = n as i32;
        let mut modes = Vec::new();
        for k1 in 0..=ni {
            for k2 in -ni..=ni {
                let k = Wavevector { k1, k2 };
                if k.is_stored() {
                    modes.push(k);
                }
            }
        }
        let half = modes.len();
        let side = 2 * n + 1;
        let mut lookup = vec![u32::MAX; side * side];
        let full: Vec<Wavevector> = modes.iter().copied().chain(modes.iter().map(|k| k.neg())).collect();
        for (i, k) in full.iter().enumerate() {
            lookup[(k.k1 + ni) as usize * side + (k.k2 + ni) as usize] = i as u32;
        }
        let sign = |i: usize| if i < half { 1.0 } else { -1.0 };
        let mut triads = vec![Vec::new(); full.len()];
        for (p_idx, p) in full.iter().enumerate() {
            for (q_idx, q) in full.iter().enumerate() {
                let (k1, k2) = (p.k1 + q.k1, p.k2 + q.k2);
                if k1.abs() > ni || k2.abs() > ni || (k1 == 0 && k2 == 0) {
                    continue;
                }
                let k = Wavevector { k1, k2 };
                if !k.is_stored() {
                    continue;
                }
                let k_idx = lookup[(k1 + ni) as usize * side + (k2 + ni) as usize] as usize;
                let cross = (p.k1 * q.k2 - p.k2 * q.k1) as f64;
                let dot = (q.k1 * k.k1 + q.k2 * k.k2) as f64;
                if cross == 0.0 || dot == 0.0 {
                    continue;
                }
                let weight = sign(p_idx) * sign(q_idx) * cross * dot / (p.norm_sq() * q.norm_sq() * k.norm_sq()).sqrt();
                triads[p_idx].push(Triad {
                    q: q_idx as u32,
                    k: k_idx as u32,
                    weight,
                });
            }
        }
        let eigenvalues = modes.iter().map(Wavevector::norm_sq).collect();
        Ok(Arc::new(Truncation {
            n,
            modes,
            eigenvalues,
            lookup,
            triads,
        }))
    }

    pub fn radius(&self) -> usize {
        self.n
    }

    /// Stored wavevectors in canonical order.
    pub fn modes(&self) -> &[Wavevector] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn eigenvalue(&self, idx: usize) -> f64 {
        self.eigenvalues[idx]
    }

    /// Index of `k` in the full lattice (stored half first, then mirrors).
    fn full_index(&self, k: Wavevector) -> Option<usize> {
        if k.linf() > self.n || (k.k1 == 0 && k.k2 == 0) {
            return None;
        }
        let ni = self.n as i32;
        let side = 2 * self.n + 1;
        let idx = self.lookup[(k.k1 + ni) as usize * side + (k.k2 + ni) as usize];
        (idx != u32::MAX).then_some(idx as usize)
    }

    /// Stored index of `k` or of `-k`, with `+1` / `-1` telling which.
    pub fn stored_index(&self, k: Wavevector) -> Option<(usize, f64)> {
        let idx = self.full_index(k)?;
        Some(if idx < self.len() {
            (idx, 1.0)
        } else {
            (idx - self.len(), -1.0)
        })
    }
}

/// A real divergence-free field on a given truncation.
#[derive(Debug, Clone)]
pub struct SpectralField {
    basis: Arc<Truncation>,
    coeffs: Vec<Complex64>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.basis.n == other.basis.n && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn zeros(basis: &Arc<Truncation>) -> Self {
        SpectralField {
            basis: Arc::clone(basis),
            coeffs: vec![Complex64::new(0.0, 0.0); basis.len()],
        }
    }

    pub fn from_coefficients(basis: &Arc<Truncation>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::invalid(format!(
                "expected {} coefficients, got {}",
                basis.len(),
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidState("non-finite spectral coefficient".into()));
        }
        Ok(SpectralField {
            basis: Arc::clone(basis),
            coeffs,
        })
    }

    /// Independent complex Gaussian amplitudes with standard deviation
    /// `|k|^-decay` per component.
    pub fn random(basis: &Arc<Truncation>, stream: &mut RngStream, decay: f64) -> Self {
        let coeffs = basis
            .modes()
            .iter()
            .map(|k| {
                let s = k.norm_sq().powf(-0.5 * decay);
                Complex64::new(s * stream.standard_normal(), s * stream.standard_normal())
            })
            .collect();
        SpectralField {
            basis: Arc::clone(basis),
            coeffs,
        }
    }

    pub fn basis(&self) -> &Arc<Truncation> {
        &self.basis
    }

    pub fn truncation(&self) -> usize {
        self.basis.n
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Amplitude along `p(k)` for any nonzero `k` in the truncation, mirrors
    /// included.
    pub fn coefficient(&self, k: Wavevector) -> Option<Complex64> {
        let (idx, side) = self.basis.stored_index(k)?;
        let c = self.coeffs[idx];
        Some(if side > 0.0 { c } else { c.conj() })
    }

    fn check_same_basis(&self, other: &SpectralField) -> Result<()> {
        if self.basis.n != other.basis.n {
            return Err(Error::invalid(format!(
                "truncation mismatch: {} vs {}",
                self.basis.n, other.basis.n
            )));
        }
        Ok(())
    }

    /// `H` inner product.
    pub fn inner(&self, other: &SpectralField) -> Result<f64> {
        self.check_same_basis(other)?;
        Ok(2.0
            * self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| (a * b.conj()).re)
                .sum::<f64>())
    }

    pub fn h_norm_sq(&self) -> f64 {
        2.0 * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn h_norm(&self) -> f64 {
        self.h_norm_sq().sqrt()
    }

    /// `V` norm squared, `sum |k|^2 |c_k|^2` over the full lattice.
    pub fn v_norm_sq(&self) -> f64 {
        2.0 * self
            .coeffs
            .iter()
            .zip(&self.basis.eigenvalues)
            .map(|(c, l)| l * c.norm_sqr())
            .sum::<f64>()
    }

    pub fn scale(&self, s: f64) -> SpectralField {
        SpectralField {
            basis: Arc::clone(&self.basis),
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        self.check_same_basis(other)?;
        Ok(SpectralField {
            basis: Arc::clone(&self.basis),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        self.add(&other.scale(-1.0))
    }

    /// Coefficients over the full lattice (stored half, then conjugate mirrors).
    fn full(&self) -> Vec<Complex64> {
        self.coeffs
            .iter()
            .copied()
            .chain(self.coeffs.iter().map(|c| c.conj()))
            .collect()
    }

    /// Velocity at a physical point, for cross-checks against physical-space
    /// formulas.
    pub fn velocity_at(&self, x: [f64; 2]) -> [f64; 2] {
        let mut u = [0.0; 2];
        for (k, c) in self.basis.modes.iter().zip(&self.coeffs) {
            let phase = Complex64::from_polar(1.0, k.k1 as f64 * x[0] + k.k2 as f64 * x[1]);
            let amp = 2.0 * (c * phase).re;
            let norm = k.norm_sq().sqrt();
            u[0] += amp * (-k.k2 as f64) / norm;
            u[1] += amp * (k.k1 as f64) / norm;
        }
        u
    }
}

/// Real unit-norm Stokes eigenvector `(k_perp / |k|) sqrt(2) cos(k.x)` with
/// eigenvalue `|k|^2`.
pub fn stokes_eigenmode(basis: &Arc<Truncation>, k: Wavevector) -> Result<SpectralField> {
    if k.k1 == 0 && k.k2 == 0 {
        return Err(Error::invalid("the zero wavevector has no eigenmode"));
    }
    let (idx, side) = basis
        .stored_index(k)
        .ok_or_else(|| Error::invalid(format!("wavevector ({}, {}) lies outside the truncation", k.k1, k.k2)))?;
    let mut field = SpectralField::zeros(basis);
    field.coeffs[idx] = Complex64::new(side * std::f64::consts::FRAC_1_SQRT_2, 0.0);
    Ok(field)
}

/// Stokes operator: multiplies every amplitude by `|k|^2`.
pub fn apply_a(field: &SpectralField) -> SpectralField {
    SpectralField {
        basis: Arc::clone(&field.basis),
        coeffs: field
            .coeffs
            .iter()
            .zip(&field.basis.eigenvalues)
            .map(|(c, l)| c * *l)
            .collect(),
    }
}

/// Galerkin projection of `(u . grad) v` onto divergence-free fields of the
/// truncation.
///
/// In the polarization basis every triad `p + q = k` contributes
/// `i c_p d_q (p(p).q) (p(q).p(k))`. Summation order is fixed (ascending `p`,
/// then ascending `q`).
pub fn bilinear_b(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    u.check_same_basis(v)?;
    let basis = &u.basis;
    let cu = u.full();
    let cv = v.full();
    let mut acc = vec![Complex64::new(0.0, 0.0); basis.len()];
    for (p, triads) in basis.triads.iter().enumerate() {
        let cp = cu[p];
        if cp.re == 0.0 && cp.im == 0.0 {
            continue;
        }
        for t in triads {
            let cq = cv[t.q as usize];
            if cq.re == 0.0 && cq.im == 0.0 {
                continue;
            }
            acc[t.k as usize] += cp * cq * t.weight;
        }
    }
    // multiply by i
    let coeffs = acc.into_iter().map(|z| Complex64::new(-z.im, z.re)).collect();
    Ok(SpectralField {
        basis: Arc::clone(basis),
        coeffs,
    })
}

/// Trilinear form `b(u, v, w) = <B(u, v), w>`.
pub fn b_form_spectral(u: &SpectralField, v: &SpectralField, w: &SpectralField) -> Result<f64> {
    bilinear_b(u, v)?.inner(w)
}

/// `sum |weight| |c_p| |d_q| |e_k|` over all triads: the size of the terms
/// that cancel in `b(u, v, w)`, used to judge rounding-level residuals.
pub fn trilinear_abs_scale(u: &SpectralField, v: &SpectralField, w: &SpectralField) -> Result<f64> {
    u.check_same_basis(v)?;
    u.check_same_basis(w)?;
    Ok(2.0
        * bilinear_abs(u, v)
            .iter()
            .zip(&w.coeffs)
            .map(|(a, c)| a * c.norm())
            .sum::<f64>())
}

fn bilinear_abs(u: &SpectralField, v: &SpectralField) -> Vec<f64> {
    let basis = &u.basis;
    let cu = u.full();
    let cv = v.full();
    let mut acc = vec![0.0; basis.len()];
    for (p, triads) in basis.triads.iter().enumerate() {
        let a = cu[p].norm();
        for t in triads {
            acc[t.k as usize] += a * cv[t.q as usize].norm() * t.weight.abs();
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NseParams {
    pub mu: f64,
    pub forced_mode: Wavevector,
    pub kappa: f64,
    pub sigma: f64,
    pub truncation: usize,
}

impl NseParams {
    pub fn new(mu: f64, forced_mode: Wavevector, kappa: f64, sigma: f64, truncation: usize) -> Result<Self> {
        let p = NseParams {
            mu,
            forced_mode,
            kappa,
            sigma,
            truncation,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::invalid(format!("viscosity must be positive, got {}", self.mu)));
        }
        if self.forced_mode.k1 == 0 && self.forced_mode.k2 == 0 {
            return Err(Error::invalid("forced mode must be nonzero"));
        }
        if !self.kappa.is_finite() || !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!(
                "need finite kappa and sigma >= 0, got kappa = {}, sigma = {}",
                self.kappa, self.sigma
            )));
        }
        if self.truncation < self.forced_mode.linf() {
            return Err(Error::invalid(format!(
                "truncation {} does not contain forced mode ({}, {})",
                self.truncation, self.forced_mode.k1, self.forced_mode.k2
            )));
        }
        Ok(())
    }

    /// Eigenvalue `lambda = |k0|^2` of the forced mode.
    pub fn lambda(&self) -> f64 {
        self.forced_mode.norm_sq()
    }

    /// Decay rate `mu lambda` of the forced amplitude.
    pub fn forced_rate(&self) -> f64 {
        self.mu * self.lambda()
    }

    /// Stationary `E |z|_V^2` of the forced Stokes (OU) field:
    /// `(kappa^2 / (lambda^2 mu^2) + sigma^2 / (2 lambda mu)) lambda`.
    pub fn ou_second_moment_v(&self) -> f64 {
        let (l, m) = (self.lambda(), self.mu);
        (self.kappa * self.kappa / (l * l * m * m) + self.sigma * self.sigma / (2.0 * l * m)) * l
    }

    /// `kappa^2 / (lambda mu^4) + sigma^2 / (2 mu^3)`.
    pub fn small_noise_indicator(&self) -> f64 {
        let m = self.mu;
        self.kappa * self.kappa / (self.lambda() * m.powi(4)) + self.sigma * self.sigma / (2.0 * m.powi(3))
    }

    /// Ceiling on `E|u(t)|_H^2` from
    /// `d E|u|^2 <= (-mu E|u|^2 + kappa^2 / mu + sigma^2) dt` (smallest eigenvalue 1).
    pub fn energy_ceiling(&self, initial_energy: f64) -> f64 {
        let rate = self.mu;
        initial_energy + (self.kappa * self.kappa / rate + self.sigma * self.sigma) / rate
    }

    pub fn basis(&self) -> Result<Arc<Truncation>> {
        self.validate()?;
        Truncation::new(self.truncation)
    }
}

/// Exponential-Euler stepper: exact integrating factor on `-mu A`, the
/// nonlinear term and the constant forcing weighted by `(1 - e^{-mu |k|^2 dt}) / (mu |k|^2)`,
/// and the Wiener increment added to the real part of the forced amplitude.
#[derive(Debug, Clone)]
pub struct NseStepper {
    params: NseParams,
    basis: Arc<Truncation>,
    dt: f64,
    decay: Vec<f64>,
    gain: Vec<f64>,
    forced_idx: usize,
    /// Stored amplitude of the unit eigenmode: `+-1/sqrt(2)`.
    forced_coeff: f64,
}

impl NseStepper {
    pub fn new(params: &NseParams, basis: &Arc<Truncation>, dt: f64) -> Result<Self> {
        params.validate()?;
        if basis.radius() != params.truncation {
            return Err(Error::invalid("basis does not match the truncation radius"));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("dt must be positive and finite, got {dt}")));
        }
        let (forced_idx, side) = basis.stored_index(params.forced_mode).expect("validated above");
        let decay = basis.eigenvalues.iter().map(|l| (-params.mu * l * dt).exp()).collect();
        let gain = basis
            .eigenvalues
            .iter()
            .map(|l| -(-params.mu * l * dt).exp_m1() / (params.mu * l))
            .collect();
        Ok(NseStepper {
            params: *params,
            basis: Arc::clone(basis),
            dt,
            decay,
            gain,
            forced_idx,
            forced_coeff: side * std::f64::consts::FRAC_1_SQRT_2,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `<u, e>_H` with `e` the unit forced eigenmode.
    pub fn forced_amplitude(&self, field: &SpectralField) -> f64 {
        2.0 * field.coeffs[self.forced_idx].re * self.forced_coeff
    }

    /// `|u|_H^2 - <u, e>^2`.
    pub fn offmode_energy(&self, field: &SpectralField) -> f64 {
        let mut total = 0.0;
        for (i, c) in field.coeffs.iter().enumerate() {
            total += if i == self.forced_idx {
                c.im * c.im
            } else {
                c.norm_sqr()
            };
        }
        2.0 * total
    }

    pub fn step(&self, field: &SpectralField, dw: f64, step: usize) -> Result<SpectralField> {
        if field.truncation() != self.basis.radius() {
            return Err(Error::invalid("field truncation does not match the stepper"));
        }
        let nonlinear = bilinear_b(field, field)?;
        let mut coeffs: Vec<Complex64> = field
            .coeffs
            .iter()
            .zip(&nonlinear.coeffs)
            .zip(self.decay.iter().zip(&self.gain))
            .map(|((c, b), (d, g))| c * *d - b * *g)
            .collect();
        let f = &mut coeffs[self.forced_idx];
        f.re += self.forced_coeff * (self.gain[self.forced_idx] * self.params.kappa + self.params.sigma * dw);
        let next = SpectralField {
            basis: Arc::clone(&self.basis),
            coeffs,
        };
        let e = next.h_norm_sq();
        if !e.is_finite() || e > NSE_BLOW_UP_CAP * NSE_BLOW_UP_CAP {
            return Err(Error::BlowUp {
                step,
                time: step as f64 * self.dt,
                trajectory: None,
            });
        }
        Ok(next)
    }
}

/// One exponential-Euler step driven by the Wiener increment `dw`.
pub fn step_nse(params: &NseParams, field: &SpectralField, dt: f64, dw: f64) -> Result<SpectralField> {
    if field.truncation() != params.truncation {
        return Err(Error::invalid("field truncation does not match the parameters"));
    }
    NseStepper::new(params, field.basis(), dt)?.step(field, dw, 1)
}

/// Exact transition of the linear forced Stokes equation
/// `dz = (-mu A z + kappa e) dt + sigma e dW` over a step `dt`.
#[derive(Debug, Clone)]
pub struct StokesOuStepper {
    inner: NseStepper,
    forced: OuTransition,
}

impl StokesOuStepper {
    pub fn new(params: &NseParams, basis: &Arc<Truncation>, dt: f64) -> Result<Self> {
        Ok(StokesOuStepper {
            inner: NseStepper::new(params, basis, dt)?,
            forced: OuTransition::new(dt, params.forced_rate(), params.kappa, params.sigma)?,
        })
    }

    pub fn forced_amplitude(&self, field: &SpectralField) -> f64 {
        self.inner.forced_amplitude(field)
    }

    pub fn step(&self, field: &SpectralField, gauss: f64) -> SpectralField {
        let s = &self.inner;
        let mut coeffs: Vec<Complex64> = field.coeffs.iter().zip(&s.decay).map(|(c, d)| c * *d).collect();
        let a = s.forced_amplitude(field);
        let next = self.forced.apply(a, gauss);
        coeffs[s.forced_idx].re = next * s.forced_coeff;
        SpectralField {
            basis: Arc::clone(&s.basis),
            coeffs,
        }
    }
}

/// Result of running the nonlinear system from `a e` next to the exact OU path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsistencyReport {
    /// `max_t |<u(t), e> - z(t)|`.
    pub max_deviation: f64,
    /// `max_t (|u(t)|_H^2 - <u(t), e>^2)`.
    pub max_offmode_energy: f64,
    pub steps: usize,
    pub dt: f64,
}

/// Start at `a e`, step the Galerkin system with increments drawn from
/// `stream`, and compare the forced amplitude with the exact OU recursion on
/// the same draws.
pub fn eigenmode_consistency(
    params: &NseParams,
    a: f64,
    t_end: f64,
    dt: f64,
    stream: &mut RngStream,
) -> Result<ConsistencyReport> {
    let n = crate::minea::step_count(t_end, dt)?;
    let increments = crate::noise::brownian_increments(stream, dt, n)?;
    eigenmode_consistency_with_increments(params, a, &increments)
}

/// [`eigenmode_consistency`] on prescribed Wiener increments. The OU side
/// uses `gauss = dW / sqrt(dt)`.
pub fn eigenmode_consistency_with_increments(
    params: &NseParams,
    a: f64,
    increments: &BrownianIncrements,
) -> Result<ConsistencyReport> {
    let basis = params.basis()?;
    let dt = increments.dt;
    let stepper = NseStepper::new(params, &basis, dt)?;
    let ou = OuTransition::new(dt, params.forced_rate(), params.kappa, params.sigma)?;
    let mut field = stokes_eigenmode(&basis, params.forced_mode)?.scale(a);
    let mut z = a;
    let sqrt_dt = dt.sqrt();
    let mut max_deviation: f64 = (stepper.forced_amplitude(&field) - z).abs();
    let mut max_offmode_energy: f64 = stepper.offmode_energy(&field);
    for (k, dw) in increments.increments.iter().enumerate() {
        field = stepper.step(&field, *dw, k + 1)?;
        z = ou.apply(z, dw / sqrt_dt);
        max_deviation = max_deviation.max((stepper.forced_amplitude(&field) - z).abs());
        max_offmode_energy = max_offmode_energy.max(stepper.offmode_energy(&field));
    }
    Ok(ConsistencyReport {
        max_deviation,
        max_offmode_energy,
        steps: increments.len(),
        dt,
    })
}

/// Ensemble decay of the unforced modes and the law of the forced amplitude.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallNoiseReport {
    pub times: Vec<f64>,
    /// Ensemble mean of the off-mode energy at each recorded time.
    pub offmode_energy_decay: Vec<f64>,
    /// Ensemble mean of `|u|_H^2` at each recorded time.
    pub total_energy: Vec<f64>,
    /// Forced amplitudes at the final time, one per trajectory.
    pub forced_amplitudes: Vec<f64>,
    /// KS distance of the final forced amplitudes to the stationary OU law.
    pub ks_forced_mode: f64,
    pub small_noise_indicator: f64,
}

/// Number of recorded times in [`small_noise_convergence`] (plus `t = 0`).
const SMALL_NOISE_RECORDS: usize = 200;

pub fn small_noise_convergence(
    params: &NseParams,
    v: &SpectralField,
    t_end: f64,
    dt: f64,
    n_traj: usize,
    seed: u64,
) -> Result<SmallNoiseReport> {
    let indicator = params.small_noise_indicator();
    if indicator > SMALL_NOISE_GATE {
        return Err(Error::invalid(format!(
            "kappa^2/(lambda mu^4) + sigma^2/(2 mu^3) = {indicator} exceeds the small-noise gate {SMALL_NOISE_GATE}"
        )));
    }
    if n_traj == 0 {
        return Err(Error::invalid("need at least one trajectory"));
    }
    if v.truncation() != params.truncation {
        return Err(Error::invalid("initial field truncation does not match the parameters"));
    }
    let n_steps = crate::minea::step_count(t_end, dt)?;
    let stride = (n_steps / SMALL_NOISE_RECORDS).max(1);
    let keep = |k: usize| k % stride == 0 || k == n_steps;
    let times: Vec<f64> = (0..=n_steps).filter(|k| keep(*k)).map(|k| k as f64 * dt).collect();
    let stepper = NseStepper::new(params, v.basis(), dt)?;
    let sqrt_dt = dt.sqrt();

    let runs: Vec<Result<(Vec<f64>, Vec<f64>, f64)>> = (0..n_traj as u64)
        .into_par_iter()
        .map(|i| {
            let mut stream = make_stream(seed, i);
            let mut field = v.clone();
            let mut off = Vec::with_capacity(times.len());
            let mut total = Vec::with_capacity(times.len());
            off.push(stepper.offmode_energy(&field));
            total.push(field.h_norm_sq());
            for k in 1..=n_steps {
                field = stepper
                    .step(&field, sqrt_dt * stream.standard_normal(), k)
                    .map_err(|e| e.with_trajectory(i))?;
                if keep(k) {
                    off.push(stepper.offmode_energy(&field));
                    total.push(field.h_norm_sq());
                }
            }
            Ok((off, total, stepper.forced_amplitude(&field)))
        })
        .collect();

    let mut offmode_energy_decay = vec![0.0; times.len()];
    let mut total_energy = vec![0.0; times.len()];
    let mut forced_amplitudes = Vec::with_capacity(n_traj);
    for run in runs {
        let (off, total, amp) = run?;
        offmode_energy_decay.iter_mut().zip(off).for_each(|(m, x)| *m += x);
        total_energy.iter_mut().zip(total).for_each(|(m, x)| *m += x);
        forced_amplitudes.push(amp);
    }
    let n = n_traj as f64;
    offmode_energy_decay.iter_mut().for_each(|m| *m /= n);
    total_energy.iter_mut().for_each(|m| *m /= n);

    let law = ou_stationary_law(params.forced_rate(), params.kappa, params.sigma)?;
    let emp = EmpiricalMeasure1D::new(forced_amplitudes.clone())?;
    let ks_forced_mode = if law.is_point_mass() {
        ks_distance_point_mass(&emp, law.mean)
    } else {
        ks_distance(&emp, &law)?
    };
    Ok(SmallNoiseReport {
        times,
        offmode_energy_decay,
        total_energy,
        forced_amplitudes,
        ks_forced_mode,
        small_noise_indicator: indicator,
    })
}

/// Largest relative residual of each bilinear identity over a batch of
/// random instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityReport {
    pub trials: usize,
    /// `b(u, v, w) + b(u, w, v)`.
    pub antisymmetry: f64,
    /// `<B(u, v), v>`.
    pub energy: f64,
    /// `B(e, e)` for eigenvectors `e` (single modes and same-shell mixtures).
    pub eigenmode: f64,
    /// `<B(v, v), A v>`.
    pub enstrophy: f64,
}

impl IdentityReport {
    pub fn max_residual(&self) -> f64 {
        self.antisymmetry
            .max(self.energy)
            .max(self.eigenmode)
            .max(self.enstrophy)
    }
}

/// Check the cancellation identities of `bilinear` on `trials` random
/// instances. Residuals are relative to the sum of absolute triad
/// contributions.
pub fn identity_suite<F>(
    basis: &Arc<Truncation>,
    trials: usize,
    stream: &mut RngStream,
    bilinear: F,
) -> Result<IdentityReport>
where
    F: Fn(&SpectralField, &SpectralField) -> Result<SpectralField>,
{
    let rel = |residual: f64, scale: f64| {
        if scale > 0.0 {
            residual.abs() / scale
        } else {
            residual.abs()
        }
    };
    let mut report = IdentityReport {
        trials,
        antisymmetry: 0.0,
        energy: 0.0,
        eigenmode: 0.0,
        enstrophy: 0.0,
    };
    let mut shells: Vec<f64> = basis.eigenvalues.clone();
    shells.sort_by(f64::total_cmp);
    shells.dedup();
    for trial in 0..trials {
        let u = SpectralField::random(basis, stream, 1.0);
        let v = SpectralField::random(basis, stream, 1.0);
        let w = SpectralField::random(basis, stream, 1.0);

        let b_uvw = bilinear(&u, &v)?.inner(&w)?;
        let b_uwv = bilinear(&u, &w)?.inner(&v)?;
        let scale = trilinear_abs_scale(&u, &v, &w)?.max(trilinear_abs_scale(&u, &w, &v)?);
        report.antisymmetry = report.antisymmetry.max(rel(b_uvw + b_uwv, scale));

        let e = bilinear(&u, &v)?.inner(&v)?;
        report.energy = report.energy.max(rel(e, trilinear_abs_scale(&u, &v, &v)?));

        let av = apply_a(&v);
        let z = bilinear(&v, &v)?.inner(&av)?;
        report.enstrophy = report.enstrophy.max(rel(z, trilinear_abs_scale(&v, &v, &av)?));

        // alternate single modes and random mixtures on one shell
        let shell = shells[trial % shells.len()];
        let mut eig = SpectralField::zeros(basis);
        let members: Vec<usize> = (0..basis.len()).filter(|i| basis.eigenvalues[*i] == shell).collect();
        if trial % 2 == 0 {
            let pick = members[(stream.next_u64() % members.len() as u64) as usize];
            eig = stokes_eigenmode(basis, basis.modes[pick])?;
        } else {
            for i in &members {
                eig.coeffs[*i] = Complex64::new(stream.standard_normal(), stream.standard_normal());
            }
        }
        let bee = bilinear(&eig, &eig)?;
        let abs = bilinear_abs(&eig, &eig);
        let scale = (2.0 * abs.iter().map(|a| a * a).sum::<f64>()).sqrt();
        report.eigenmode = report.eigenmode.max(rel(bee.h_norm(), scale));
    }
    Ok(report)
}
