//! JSON study configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{build_channel_mesh, ChannelGeometry};
use crate::physics::GasModel;
use crate::rom::RomConfig;
use crate::snapshots::Study;
use crate::solver::{FlowConditions, SolverConfig};

/// Gas properties and inflow state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GasSection {
    pub gamma: f64,
    pub gas_constant: f64,
    pub prandtl: f64,
    pub inlet_velocity: f64,
    pub inlet_density: f64,
}

impl Default for GasSection {
    fn default() -> Self {
        let g = GasModel::default();
        let f = FlowConditions::default();
        Self {
            gamma: g.gamma,
            gas_constant: g.gas_constant,
            prandtl: g.prandtl,
            inlet_velocity: f.inlet_velocity,
            inlet_density: f.inlet_density,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationSection {
    /// Elements across the inlet.
    pub n_y: usize,
    pub order: usize,
    /// Mesh levels of the grid-convergence study.
    pub convergence_levels: Vec<usize>,
}

impl Default for DiscretizationSection {
    fn default() -> Self {
        Self {
            n_y: 4,
            order: 3,
            convergence_levels: vec![4, 6, 8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub mach: Vec<f64>,
    pub mu: Vec<f64>,
    /// Warm-start each case from the next-smaller viscosity.
    pub continuation: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            mach: vec![0.3],
            mu: vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5],
            continuation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub gas: GasSection,
    pub geometry: ChannelGeometry,
    pub discretization: DiscretizationSection,
    pub solver: SolverConfig,
    pub sweep: SweepSection,
    pub rom: RomConfig,
    pub output: OutputSection,
}

fn bad<T>(path: impl Into<String>, message: impl Into<String>) -> Result<T> {
    Err(Error::Config {
        path: path.into(),
        message: message.into(),
    })
}

impl Config {
    /// Parse and validate; schema errors carry the JSON path of the offending key.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// The effective configuration, defaults included.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.gas;
        if !(g.gamma > 1.0) {
            return bad("gas.gamma", format!("must exceed 1, got {}", g.gamma));
        }
        if !(g.gas_constant > 0.0) {
            return bad("gas.gas_constant", format!("must be positive, got {}", g.gas_constant));
        }
        if !(g.prandtl > 0.0) {
            return bad("gas.prandtl", format!("must be positive, got {}", g.prandtl));
        }
        if !(g.inlet_velocity > 0.0) {
            return bad("gas.inlet_velocity", format!("must be positive, got {}", g.inlet_velocity));
        }
        if !(g.inlet_density > 0.0) {
            return bad("gas.inlet_density", format!("must be positive, got {}", g.inlet_density));
        }
        if let Err(e) = self.geometry.validate() {
            return bad("geometry", e.to_string());
        }
        let d = &self.discretization;
        if d.order == 0 || d.order > 12 {
            return bad("discretization.order", format!("must lie in 1..=12, got {}", d.order));
        }
        if let Err(e) = build_channel_mesh(&self.geometry, d.n_y) {
            return bad("discretization.n_y", e.to_string());
        }
        for (i, &n) in d.convergence_levels.iter().enumerate() {
            if let Err(e) = build_channel_mesh(&self.geometry, n) {
                return bad(format!("discretization.convergence_levels[{i}]"), e.to_string());
            }
        }
        self.solver.validate()?;
        let s = &self.sweep;
        if s.mach.is_empty() {
            return bad("sweep.mach", "at least one Mach number is required");
        }
        for (i, &m) in s.mach.iter().enumerate() {
            if !(m > 0.0 && m < 1.0) {
                return bad(format!("sweep.mach[{i}]"), format!("must lie in (0, 1), got {m}"));
            }
        }
        if s.mu.is_empty() {
            return bad("sweep.mu", "at least one viscosity is required");
        }
        for (i, &m) in s.mu.iter().enumerate() {
            if !(m > 0.0 && m.is_finite()) {
                return bad(format!("sweep.mu[{i}]"), format!("must be positive, got {m}"));
            }
        }
        self.rom.validate()
    }

    pub fn gas_model(&self) -> GasModel {
        GasModel {
            gamma: self.gas.gamma,
            gas_constant: self.gas.gas_constant,
            prandtl: self.gas.prandtl,
            ..GasModel::default()
        }
    }

    pub fn flow(&self) -> FlowConditions {
        FlowConditions {
            inlet_velocity: self.gas.inlet_velocity,
            inlet_density: self.gas.inlet_density,
        }
    }

    pub fn study(&self) -> Study {
        self.study_at(self.discretization.n_y)
    }

    /// Same study on another mesh level.
    pub fn study_at(&self, n_y: usize) -> Study {
        Study {
            geometry: self.geometry,
            gas: self.gas_model(),
            flow: self.flow(),
            n_y,
            order: self.discretization.order,
            solver: self.solver.clone(),
        }
    }
}
