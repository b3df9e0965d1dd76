//! Simulation and measure diagnostics for the three-mode Minea system and a
//! spectral Galerkin truncation of the 2D stochastic Navier-Stokes equations
//! with single-mode forcing.

pub mod error;
pub mod measure;
pub mod minea;
pub mod noise;
pub mod spectral;

pub use error::{Error, Result};
pub use measure::{
    dual_basin_experiment, e55_check, e55_check_with, ensemble_law, ks_distance, ks_two_sample, phase_scan,
    phase_scan_with_cancel, time_average_x, DualBasinReport, E55Check, EmpiricalMeasure1D, OccupationMeasure,
    PhaseScanConfig, PhaseScanRow, Verdict,
};
pub use minea::{
    gaussian_invariant, simulate, stationary_points, uniqueness_regime, MineaParams, Regime, Scheme, State3, Trajectory,
};
pub use noise::{make_stream, ou_stationary_law, ou_step, GaussianLaw1D, RngStream};
pub use spectral::{NseParams, SpectralField, Truncation, Wavevector};
