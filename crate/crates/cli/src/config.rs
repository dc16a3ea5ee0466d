//! Versioned JSON run configuration.

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use schur_dd::geometry::{generate_cloud, BoxGrid, Point, Scatterer, ScattererShape};
use schur_dd::rtr::Coupling;
use schur_dd::solve::{ConditionBounds, Discretization};
use schur_dd::Wavenumber;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub wavenumber: f64,
    pub grid: GridSpec,
    pub scatterers: ScattererSpec,
    pub discretization: Discretization,
    #[serde(default)]
    pub parameters: ParameterSpec,
    /// Incident directions in radians.
    pub incident_angles: Vec<f64>,
    #[serde(default)]
    pub outputs: OutputSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub condition_bounds: ConditionBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub origin: Point,
    pub box_width: f64,
    pub box_height: f64,
    pub cols: usize,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScattererSpec {
    None,
    Random {
        shape: ScattererShape,
        per_box: usize,
        clearance: Option<f64>,
        seed: u64,
    },
    /// Each scatterer goes to the box containing its center.
    Explicit { list: Vec<Scatterer> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EpsRule {
    /// `ε = factor · k^{1/3}`.
    CubeRoot { factor: f64 },
    Fixed { value: f64 },
}

impl Default for EpsRule {
    fn default() -> Self {
        EpsRule::CubeRoot { factor: 0.4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSpec {
    /// Defaults to `k`.
    pub eta: Option<f64>,
    #[serde(default)]
    pub eps_rule: EpsRule,
    /// Defaults to `max(k, 1)`.
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NearFieldWindow {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub far_field_points: usize,
    pub near_field: Option<NearFieldWindow>,
    #[serde(default)]
    pub probes: Vec<Point>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            far_field_points: 360,
            near_field: None,
            probes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub enabled: bool,
    pub nodes_per_scatterer: usize,
    pub budget: usize,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            enabled: false,
            nodes_per_scatterer: 16,
            budget: schur_dd::oracle::DEFAULT_BUDGET,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).context("parsing the configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.schema_version == SCHEMA_VERSION,
            "unsupported schema version {} (expected {SCHEMA_VERSION})",
            self.schema_version
        );
        ensure!(self.wavenumber > 0.0 && self.wavenumber.is_finite(), "wavenumber must be positive");
        ensure!(self.grid.cols > 0 && self.grid.rows > 0, "grid counts must be positive");
        ensure!(self.grid.box_width > 0.0 && self.grid.box_height > 0.0, "box sizes must be positive");
        let d = &self.discretization;
        ensure!(d.n_per_edge > 0 && d.n_per_scatterer > 0, "mesh sizes must be positive");
        ensure!(!self.incident_angles.is_empty(), "at least one incident angle is needed");
        ensure!(self.outputs.far_field_points > 0, "far_field_points must be positive");
        let b = &self.condition_bounds;
        ensure!(b.merge > 1.0 && b.reduced > 1.0, "condition bounds must exceed 1");
        if let Some(eta) = self.parameters.eta {
            ensure!(eta > 0.0, "eta must be positive, got {eta}");
        }
        if let Some(w) = &self.outputs.near_field {
            ensure!(w.nx > 0 && w.ny > 0, "near-field resolution must be positive");
            ensure!(w.x1 > w.x0 && w.y1 > w.y0, "near-field window is empty");
        }
        if let ScattererSpec::Random { per_box, .. } = &self.scatterers {
            ensure!(*per_box > 0, "per_box must be positive");
        }
        Ok(())
    }

    pub fn coupling(&self) -> Result<Coupling> {
        let k = self.wavenumber;
        let mut c = Coupling::defaults(k)?;
        if let Some(eta) = self.parameters.eta {
            c.eta = eta;
        }
        c.eps = match self.parameters.eps_rule {
            EpsRule::CubeRoot { factor } => factor * k.cbrt(),
            EpsRule::Fixed { value } => value,
        };
        if let Some(mu) = self.parameters.mu {
            c.mu = mu;
        }
        c.k = Wavenumber::real(k)?;
        c.validate()?;
        Ok(c)
    }

    /// The box grid with its scatterers; `seed_override` replaces the
    /// random-cloud seed.
    pub fn build_grid(&self, seed_override: Option<u64>) -> Result<BoxGrid> {
        let g = &self.grid;
        let base = BoxGrid::new(g.origin, g.box_width, g.box_height, g.cols, g.rows)?;
        match &self.scatterers {
            ScattererSpec::None => Ok(base),
            ScattererSpec::Random {
                shape,
                per_box,
                clearance,
                seed,
            } => Ok(generate_cloud(&base, *per_box, *shape, *clearance, seed_override.unwrap_or(*seed))?),
            ScattererSpec::Explicit { list } => {
                let mut grid = base;
                for (i, s) in list.iter().enumerate() {
                    let Some(b) = grid.locate(s.center()) else {
                        bail!("scatterer {i} lies outside the grid");
                    };
                    grid.scatterers[b].push(*s);
                }
                grid.validate(0.0)?;
                Ok(grid)
            }
        }
    }

    pub fn far_field_angles(&self) -> Vec<f64> {
        schur_dd::oracle::FarFieldSamples::uniform_angles(self.outputs.far_field_points)
    }
}
