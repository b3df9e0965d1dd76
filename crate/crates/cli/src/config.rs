//! Experiment configuration: strict JSON, unknown keys rejected, every
//! numeric constraint checked before any output is produced.

use std::path::Path;

use minea_ergo::spectral::NseParams;
use minea_ergo::{MineaParams, Scheme, State3, Wavevector};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: Option<SystemSection>,
    pub nse: Option<NseSection>,
    #[serde(default)]
    pub sim: SimSection,
    /// Initial state `[u1, u2, u3]`; `[0, 1, 1]` when absent.
    pub initial: Option<[f64; 3]>,
    /// Output path prefix; `--out` takes precedence.
    pub output: Option<String>,
    pub scan: Option<ScanSection>,
    #[serde(default)]
    pub ou_check: OuCheckSection,
    #[serde(default)]
    pub nse_verify: NseVerifySection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub lambda: [f64; 3],
    /// Not needed by phase-scan, which reads its grid from `scan`.
    pub kappa: Option<f64>,
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NseSection {
    #[serde(default = "one")]
    pub mu: f64,
    #[serde(default = "default_forced_mode")]
    pub forced_mode: [i32; 2],
    pub kappa: f64,
    pub sigma: f64,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub t_end: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub n_traj: usize,
    pub burn_in_frac: f64,
    /// Steps between recorded states; 100 for simulate, 10 for phase-scan
    /// when absent.
    pub record_stride: Option<usize>,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            t_end: 100.0,
            dt: 1e-3,
            scheme: Scheme::ExpSplitting,
            seed: 0,
            n_traj: 500,
            burn_in_frac: 0.5,
            record_stride: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub kappa: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuCheckSection {
    pub n: usize,
    /// Length of the exact transition applied to each stationary draw.
    pub horizon: f64,
}

impl Default for OuCheckSection {
    fn default() -> Self {
        OuCheckSection {
            n: 100_000,
            horizon: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NseVerifySection {
    pub identity_trials: usize,
    pub amplitude: f64,
    pub consistency_t: f64,
    pub consistency_dt: f64,
    /// Set to false to skip the ensemble run.
    pub convergence: bool,
    pub convergence_t: f64,
    pub convergence_dt: f64,
    pub convergence_n_traj: usize,
    /// Negative control: run the identity suite on a deliberately broken
    /// bilinear term.
    pub corrupt: bool,
}

impl Default for NseVerifySection {
    fn default() -> Self {
        NseVerifySection {
            identity_trials: 100,
            amplitude: 1.0,
            consistency_t: 10.0,
            consistency_dt: 1e-3,
            convergence: true,
            convergence_t: 50.0,
            convergence_dt: 1e-2,
            convergence_n_traj: 20,
            corrupt: false,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_forced_mode() -> [i32; 2] {
    [1, 0]
}

fn default_truncation() -> usize {
    8
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("{name} must be positive and finite, got {x}")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| bad(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks every section that is present.
    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(sys) = &self.system {
            for (i, l) in sys.lambda.iter().enumerate() {
                positive(&format!("system.lambda[{i}]"), *l)?;
            }
            if let (Some(_), Some(_)) = (sys.kappa, sys.sigma) {
                self.minea_params()?;
            }
            if let Some(k) = sys.kappa {
                if !k.is_finite() {
                    return Err(bad(format!("system.kappa must be finite, got {k}")));
                }
            }
            if let Some(s) = sys.sigma {
                if !(s >= 0.0 && s.is_finite()) {
                    return Err(bad(format!("system.sigma must be finite and >= 0, got {s}")));
                }
            }
        }
        if self.nse.is_some() {
            self.nse_params()?;
        }
        let sim = &self.sim;
        positive("sim.t_end", sim.t_end)?;
        positive("sim.dt", sim.dt)?;
        if sim.dt > sim.t_end {
            return Err(bad(format!("sim.dt = {} exceeds sim.t_end = {}", sim.dt, sim.t_end)));
        }
        if sim.n_traj == 0 {
            return Err(bad("sim.n_traj must be at least 1"));
        }
        if !(0.0..1.0).contains(&sim.burn_in_frac) {
            return Err(bad(format!(
                "sim.burn_in_frac must lie in [0, 1), got {}",
                sim.burn_in_frac
            )));
        }
        if sim.record_stride == Some(0) {
            return Err(bad("sim.record_stride must be at least 1"));
        }
        if let Some(v) = self.initial {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(bad("initial state must be finite"));
            }
        }
        if let Some(scan) = &self.scan {
            if scan.kappa.is_empty() || scan.sigma.is_empty() {
                return Err(bad("scan.kappa and scan.sigma must be non-empty"));
            }
            if scan.kappa.iter().any(|k| !k.is_finite()) {
                return Err(bad("scan.kappa values must be finite"));
            }
            if scan.sigma.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
                return Err(bad("scan.sigma values must be finite and >= 0"));
            }
        }
        if self.ou_check.n < 2 {
            return Err(bad("ou_check.n must be at least 2"));
        }
        positive("ou_check.horizon", self.ou_check.horizon)?;
        let nv = &self.nse_verify;
        positive("nse_verify.consistency_t", nv.consistency_t)?;
        positive("nse_verify.consistency_dt", nv.consistency_dt)?;
        positive("nse_verify.convergence_t", nv.convergence_t)?;
        positive("nse_verify.convergence_dt", nv.convergence_dt)?;
        if !nv.amplitude.is_finite() {
            return Err(bad("nse_verify.amplitude must be finite"));
        }
        if nv.identity_trials == 0 || nv.convergence_n_traj == 0 {
            return Err(bad("nse_verify trial and trajectory counts must be at least 1"));
        }
        Ok(())
    }

    fn system(&self) -> Result<&SystemSection, CliError> {
        self.system.as_ref().ok_or_else(|| bad("missing 'system' section"))
    }

    /// Full parameter set; needs `system.kappa` and `system.sigma`.
    pub fn minea_params(&self) -> Result<MineaParams, CliError> {
        let sys = self.system()?;
        let kappa = sys.kappa.ok_or_else(|| bad("missing system.kappa"))?;
        let sigma = sys.sigma.ok_or_else(|| bad("missing system.sigma"))?;
        let [l1, l2, l3] = sys.lambda;
        MineaParams::new(l1, l2, l3, kappa, sigma).map_err(|e| bad(e.to_string()))
    }

    pub fn lambda(&self) -> Result<[f64; 3], CliError> {
        Ok(self.system()?.lambda)
    }

    pub fn nse_params(&self) -> Result<NseParams, CliError> {
        let s = self.nse.as_ref().ok_or_else(|| bad("missing 'nse' section"))?;
        let k0 = Wavevector::new(s.forced_mode[0], s.forced_mode[1]).map_err(|e| bad(e.to_string()))?;
        NseParams::new(s.mu, k0, s.kappa, s.sigma, s.truncation).map_err(|e| bad(e.to_string()))
    }

    pub fn initial_state(&self) -> State3 {
        State3::from_array(self.initial.unwrap_or([0.0, 1.0, 1.0]))
    }

    pub fn scan(&self) -> Result<&ScanSection, CliError> {
        self.scan.as_ref().ok_or_else(|| bad("missing 'scan' section"))
    }
}
