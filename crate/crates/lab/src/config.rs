//! TOML experiment configuration. Every section rejects unknown keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uhs_core::carleman::geometric_s_grid;
use uhs_core::inverse::ScenarioSpec;
use uhs_core::weight::RampProfile;
use uhs_core::{GridSpec, WeightParams};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub weight: WeightConfig,
    #[serde(default)]
    pub carleman: CarlemanConfig,
    #[serde(default)]
    pub inverse: InverseConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// `D = Π[x_min, x_max]`, `G = (−L, L)^m`, `(−T, T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    #[serde(default = "one")]
    pub m: usize,
    pub half_width: f64,
    pub horizon: f64,
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CarlemanConfig {
    pub s_min: f64,
    pub s_max: f64,
    pub s_count: usize,
    pub gamma_list: Vec<f64>,
    /// Seeded modulated bumps added to the fixed test family.
    pub random_fields: usize,
}

impl Default for CarlemanConfig {
    fn default() -> Self {
        Self {
            s_min: 1.0,
            s_max: 32.0,
            s_count: 6,
            gamma_list: vec![0.05, 0.1, 0.2],
            random_fields: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ramp {
    Quintic,
    Nonic,
}

impl From<Ramp> for RampProfile {
    fn from(r: Ramp) -> Self {
        match r {
            Ramp::Quintic => RampProfile::Quintic,
            Ramp::Nonic => RampProfile::Nonic,
        }
    }
}

/// Inverse-source scenario on the data grid `[grid]`, whose half-width is `2L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InverseConfig {
    pub amplitudes: Vec<f64>,
    pub noise_level: f64,
    pub seed: u64,
    pub hoelder_c: f64,
    pub omega: f64,
    pub drift: f64,
    pub modulation: f64,
    /// `(p₀, p₁)` in `p = p₀ + p₁cos(πξ)`.
    pub potential: [f64; 2],
    pub ramp: Ramp,
    pub delta: f64,
    /// Random source terms drawn from `seed`; 0 selects the single mode `sin(πξ)`.
    pub source_terms: usize,
}

impl Default for InverseConfig {
    fn default() -> Self {
        let s = ScenarioSpec::small();
        Self {
            amplitudes: vec![0.1, 0.3, 1.0, 3.0, 10.0],
            noise_level: 0.0,
            seed: 0,
            hoelder_c: 1.0,
            omega: s.omega,
            drift: s.drift,
            modulation: s.modulation,
            potential: [s.potential.0, s.potential.1],
            ramp: Ramp::Nonic,
            delta: s.weight.delta.unwrap_or(0.25),
            source_terms: 0,
        }
    }
}

/// Manufactured-solution study on the `[grid]` geometry, `nx = ny = nt = level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub levels: Vec<usize>,
    /// Constant real potential.
    pub potential: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            levels: vec![17, 33, 65],
            potential: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub format: Format,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            format: Format::Csv,
        }
    }
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).map_err(|e| LabError::io(path, e))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| LabError::Config(format!("{} is not UTF-8: {e}", path.display())))?;
        Ok((Self::parse(text)?, bytes))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let g = &self.grid;
        Ok(GridSpec::new(
            g.x_min.clone(),
            g.x_max.clone(),
            g.m,
            g.half_width,
            g.horizon,
            g.nx,
            g.ny,
            g.nt,
        )?)
    }

    pub fn weight_params(&self) -> Result<WeightParams> {
        let w = &self.weight;
        Ok(WeightParams::new(
            w.x0.clone(),
            w.y0.clone(),
            w.alpha,
            w.beta,
            w.gamma,
            w.epsilon,
        )?)
    }

    /// The scenario for `[inverse]`, with `L` half the grid half-width.
    pub fn scenario_spec(&self) -> Result<ScenarioSpec> {
        let inv = &self.inverse;
        let weight = self.weight_params()?.with_delta(inv.delta)?;
        Ok(ScenarioSpec {
            x_min: self.grid.x_min.clone(),
            x_max: self.grid.x_max.clone(),
            m: self.grid.m,
            half_width: self.grid.half_width / 2.0,
            horizon: self.grid.horizon,
            weight,
            omega: inv.omega,
            drift: inv.drift,
            modulation: inv.modulation,
            ramp: inv.ramp.into(),
            potential: (inv.potential[0], inv.potential[1]),
        })
    }

    /// Checks every section that does not need a solve.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid_spec()?;
        self.weight_params()?.check_grid(&grid)?;
        let c = &self.carleman;
        geometric_s_grid(c.s_min, c.s_max, c.s_count)?;
        if c.s_min <= 0.0 {
            return Err(LabError::Validation(format!("s_min = {} must be positive", c.s_min)));
        }
        if c.gamma_list.is_empty() || c.gamma_list.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(LabError::Validation("gamma_list must hold positive values".into()));
        }
        let inv = &self.inverse;
        if inv.amplitudes.is_empty() || inv.amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(LabError::Validation("amplitudes must be finite and non-empty".into()));
        }
        if !(0.0..1.0).contains(&inv.noise_level) {
            return Err(LabError::Validation(format!(
                "noise_level = {} must lie in [0,1)",
                inv.noise_level
            )));
        }
        if !(inv.hoelder_c > 0.0 && inv.hoelder_c.is_finite()) {
            return Err(LabError::Validation(format!("hoelder_c = {} must be positive", inv.hoelder_c)));
        }
        if !(inv.delta > 0.0) {
            return Err(LabError::Validation(format!("delta = {} must be positive", inv.delta)));
        }
        let conv = &self.convergence;
        if conv.levels.len() < 2 || conv.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabError::Validation("convergence levels must be increasing, at least two".into()));
        }
        if conv.levels.iter().any(|&n| n < 5 || n % 2 == 0) {
            return Err(LabError::Validation("convergence levels must be odd and at least 5".into()));
        }
        if !conv.potential.is_finite() {
            return Err(LabError::Validation("convergence potential must be finite".into()));
        }
        Ok(())
    }
}
