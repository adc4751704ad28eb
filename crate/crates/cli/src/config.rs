use std::path::Path;

use intermittency_core::harness::ScheduleSpec;
use intermittency_core::renewal::default_fit_lags;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Everything a run depends on. Unknown keys are rejected at every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub alpha: f64,
    /// Cells of the graded mesh on `(0, 1]`.
    pub mesh_size: usize,
    /// Pieces of the uniform mesh on `Y`.
    pub mesh_y: usize,
    /// Largest first-return time resolved exactly.
    pub n_max: usize,
    pub seed: u64,
    pub orbit: OrbitConfig,
    pub density: DensityConfig,
    pub renewal: RenewalConfig,
    pub bc: BcConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            mesh_size: 1 << 14,
            mesh_y: 1 << 12,
            n_max: 4096,
            seed: 1,
            orbit: OrbitConfig::default(),
            density: DensityConfig::default(),
            renewal: RenewalConfig::default(),
            bc: BcConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrbitConfig {
    pub orbits: usize,
    pub steps: usize,
    pub burn_in: usize,
    /// Keep every `stride`-th point.
    pub stride: usize,
    /// Common start point; Lebesgue-uniform on `Y` per orbit when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self {
            orbits: 4,
            steps: 10_000,
            burn_in: 0,
            stride: 1,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Orbits for the Birkhoff cross-check of `mu(Y)`; 0 skips it.
    pub birkhoff_orbits: usize,
    pub birkhoff_steps: usize,
    pub birkhoff_burn_in: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iter: 1_000_000,
            birkhoff_orbits: 0,
            birkhoff_steps: 100_000,
            birkhoff_burn_in: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenewalConfig {
    pub kac_horizon: usize,
    pub max_lag: usize,
    pub fit_lags: Vec<usize>,
    pub eigen_tol: f64,
    pub eigen_max_iter: usize,
    /// Assemble `R(1)` and report its leading eigenpair.
    pub spectral: bool,
}

impl Default for RenewalConfig {
    fn default() -> Self {
        Self {
            kac_horizon: 4096,
            max_lag: 512,
            fit_lags: default_fit_lags(),
            eigen_tol: 1e-13,
            eigen_max_iter: 100_000,
            spectral: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BcConfig {
    pub schedule: ScheduleSpec,
    pub orbits: usize,
    pub horizon: usize,
    pub burn_in: usize,
    pub checkpoints: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion: Option<CriterionConfig>,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            schedule: ScheduleSpec::default_anchored(),
            orbits: 200,
            horizon: 1_000_000,
            burn_in: 10_000,
            checkpoints: vec![1_000, 10_000, 100_000, 1_000_000],
            criterion: Some(CriterionConfig::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriterionConfig {
    pub horizons: Vec<usize>,
    pub band: usize,
    /// Evaluate on the pullback of the schedule into `Y`.
    pub pullback: bool,
}

impl Default for CriterionConfig {
    fn default() -> Self {
        Self {
            horizons: vec![500, 1000, 2000],
            band: 256,
            pullback: true,
        }
    }
}

fn positive(name: &str, v: usize) -> Result<(), CliError> {
    if v == 0 {
        Err(CliError::Config(format!("{name} must be positive")))
    } else {
        Ok(())
    }
}

impl RunConfig {
    /// Reads TOML, or JSON when the file ends in `.json`. A JSON run manifest
    /// is accepted as well; its `config` member is used.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let bad = |e: String| CliError::Config(format!("{}: {e}", path.display()));
        if path.extension().is_some_and(|e| e == "json") {
            let mut value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
            if let Some(inner) = value.get_mut("config") {
                value = inner.take();
            }
            serde_json::from_value(value).map_err(|e| bad(e.to_string()))
        } else {
            toml::from_str(&text).map_err(|e| bad(e.to_string()))
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Config(format!(
                "alpha = {} is outside (0, 1)",
                self.alpha
            )));
        }
        if self.mesh_size < 2 || self.n_max < 2 {
            return Err(CliError::Config("mesh_size and n_max must be at least 2".into()));
        }
        positive("mesh_y", self.mesh_y)?;
        positive("orbit.orbits", self.orbit.orbits)?;
        positive("orbit.stride", self.orbit.stride)?;
        if let Some(x0) = self.orbit.x0 {
            if !(x0 > 0.0 && x0 <= 1.0) {
                return Err(CliError::Config(format!("orbit.x0 = {x0} is outside (0, 1]")));
            }
        }
        if !(self.density.tol > 0.0) {
            return Err(CliError::Config("density.tol must be positive".into()));
        }
        positive("density.max_iter", self.density.max_iter)?;
        let r = &self.renewal;
        positive("renewal.max_lag", r.max_lag)?;
        if r.kac_horizon == 0 || r.kac_horizon > self.n_max {
            return Err(CliError::Config(format!(
                "renewal.kac_horizon = {} must lie in [1, n_max = {}]",
                r.kac_horizon, self.n_max
            )));
        }
        if r.fit_lags.iter().any(|&n| n == 0 || n > r.max_lag) {
            return Err(CliError::Config(format!(
                "renewal.fit_lags must lie in [1, max_lag = {}]",
                r.max_lag
            )));
        }
        positive("bc.orbits", self.bc.orbits)?;
        positive("bc.horizon", self.bc.horizon)?;
        if let Some(c) = &self.bc.criterion {
            positive("bc.criterion.band", c.band)?;
            if c.horizons.is_empty() || c.horizons.contains(&0) {
                return Err(CliError::Config("bc.criterion.horizons must be positive".into()));
            }
        }
        Ok(())
    }
}
