//! Versioned JSON experiment configuration.
//!
//! One config drives every CLI subcommand; sections not needed by a command
//! may be omitted. Unknown fields are rejected so typos surface as schema
//! errors with a field path.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::pide::Scheme;
use crate::projection::EstimatorMode;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    #[serde(default)]
    pub projection: Option<ProjectionConfig>,
    #[serde(default)]
    pub pide: Option<PideConfig>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
    #[serde(default)]
    pub audit: Option<AuditConfigJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t_start: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    pub z_min: f64,
    pub z_max: f64,
    pub n_z: usize,
    #[serde(default)]
    pub y_min: Option<f64>,
    #[serde(default)]
    pub y_max: Option<f64>,
    #[serde(default)]
    pub n_y: Option<usize>,
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorMode,
    #[serde(default = "default_min_cell_count")]
    pub min_cell_count: f64,
}

fn default_estimator() -> EstimatorMode {
    EstimatorMode::Kernel
}

fn default_min_cell_count() -> f64 {
    50.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PideConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub n_t: usize,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// Mollification width for point-mass initial laws, in grid cells.
    #[serde(default = "default_mollify_cells")]
    pub mollify_cells: f64,
}

fn default_scheme() -> Scheme {
    Scheme::Imex
}

fn default_mollify_cells() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyRoute {
    Pide,
    Resimulate,
    Both,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_route")]
    pub route: VerifyRoute,
    /// Paths for the re-simulation route (defaults to `n_paths`).
    #[serde(default)]
    pub n_paths_resim: Option<usize>,
    #[serde(default = "default_tol_ks")]
    pub tolerance_ks: f64,
    #[serde(default = "default_tol_route")]
    pub tolerance_route: f64,
}

fn default_route() -> VerifyRoute {
    VerifyRoute::Both
}

fn default_tol_ks() -> f64 {
    0.02
}

fn default_tol_route() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfigJson {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub ellipticity_floor: f64,
    #[serde(default)]
    pub stable_beta: Option<f64>,
    pub tail_radii: Vec<f64>,
}

impl AuditConfigJson {
    pub fn to_core(&self) -> crate::coeffs::AssumptionAuditConfig {
        crate::coeffs::AssumptionAuditConfig {
            k1: self.k1,
            k2: self.k2,
            k3: self.k3,
            ellipticity_floor: self.ellipticity_floor,
            stable_beta: self.stable_beta,
            tail_radii: self.tail_radii.clone(),
        }
    }
}

impl ExperimentConfig {
    /// Structural validation beyond the serde schema. Error messages carry
    /// the offending field path.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(CoreError::config(format!(
                "version: expected {CONFIG_VERSION}, got {}",
                self.version
            )));
        }
        if self.grid.t_end <= self.grid.t_start {
            return Err(CoreError::config("grid.t_end: must exceed grid.t_start"));
        }
        if self.grid.n_steps == 0 {
            return Err(CoreError::config("grid.n_steps: must be at least 1"));
        }
        if self.n_paths == 0 {
            return Err(CoreError::config("n_paths: must be at least 1"));
        }
        for (i, &t) in self.checkpoints.iter().enumerate() {
            if t < self.grid.t_start - 1e-12 || t > self.grid.t_end + 1e-12 {
                return Err(CoreError::config(format!(
                    "checkpoints[{i}]: {t} outside the time grid"
                )));
            }
        }
        if let Some(p) = &self.projection {
            if p.z_max <= p.z_min {
                return Err(CoreError::config("projection.z_max: must exceed z_min"));
            }
            if p.n_z < 2 {
                return Err(CoreError::config("projection.n_z: must be at least 2"));
            }
            if let Some(h) = p.bandwidth {
                if h <= 0.0 {
                    return Err(CoreError::config("projection.bandwidth: must be positive"));
                }
            }
            match (p.y_min, p.y_max, p.n_y) {
                (None, None, None) => {}
                (Some(lo), Some(hi), Some(n)) => {
                    if hi <= lo || n < 2 {
                        return Err(CoreError::config(
                            "projection.y_min/y_max/n_y: invalid jump-size grid",
                        ));
                    }
                }
                _ => {
                    return Err(CoreError::config(
                        "projection.y_min/y_max/n_y: give all three or none",
                    ))
                }
            }
        }
        if let Some(p) = &self.pide {
            if p.x_max <= p.x_min || p.n_x < 3 {
                return Err(CoreError::config("pide.x_min/x_max/n_x: invalid grid"));
            }
            if p.n_t == 0 {
                return Err(CoreError::config("pide.n_t: must be at least 1"));
            }
        }
        if let Some(v) = &self.verify {
            if v.tolerance_ks <= 0.0 || v.tolerance_route <= 0.0 {
                return Err(CoreError::config(
                    "verify.tolerance_ks/tolerance_route: must be positive",
                ));
            }
        }
        if let Some(a) = &self.audit {
            a.to_core().validate()?;
        }
        Ok(())
    }

    pub fn time_grid(&self) -> Result<crate::grid::TimeGrid> {
        crate::grid::TimeGrid::new(self.grid.t_start, self.grid.t_end, self.grid.n_steps)
    }

    /// 64-bit FNV-1a of the serialized config, hex encoded. Stable across
    /// runs for the manifest.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}
