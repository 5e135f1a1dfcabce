//! Simulated path ensembles.

use crate::error::{CoreError, Result};
use crate::grid::TimeGrid;

/// One realized jump: the state-space increment applied at a step.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpMark {
    pub path: u32,
    pub step: u32,
    pub y: Vec<f64>,
}

/// N simulated paths with the per-step characteristics the projector needs.
///
/// `values` is `[path][step][dim]` flattened with `step = 0..=n_steps`;
/// `beta` and `diff_sq` hold the drift vector and squared-diffusion matrix
/// evaluated at the start of each step (`step = 0..n_steps`). Jump marks are
/// the state increments actually applied, sorted by `(path, step)`.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    pub dim: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub proj_coord: usize,
    pub values: Vec<f64>,
    pub beta: Option<Vec<f64>>,
    pub diff_sq: Option<Vec<f64>>,
    /// Time-change rate per `[path][step]` when the model carries one.
    pub theta: Option<Vec<f64>>,
    pub jump_marks: Vec<JumpMark>,
    /// Simulation of projected coefficients: state excursions beyond the
    /// coefficient grid (clamped) and jump sizes drawn from the lumped tail.
    pub edge_clamps: u64,
    pub tail_draws: u64,
}

impl PathEnsemble {
    #[inline]
    pub fn value(&self, path: usize, step: usize, coord: usize) -> f64 {
        self.values[(path * (self.grid.n_steps + 1) + step) * self.dim + coord]
    }

    /// Projected-coordinate state at `t_step` (the pre-step left limit).
    #[inline]
    pub fn state_proj(&self, path: usize, step: usize) -> f64 {
        self.value(path, step, self.proj_coord)
    }

    #[inline]
    pub fn beta_at(&self, path: usize, step: usize, coord: usize) -> Option<f64> {
        self.beta
            .as_ref()
            .map(|b| b[(path * self.grid.n_steps + step) * self.dim + coord])
    }

    #[inline]
    pub fn diff_sq_at(&self, path: usize, step: usize, row: usize, col: usize) -> Option<f64> {
        let d = self.dim;
        self.diff_sq
            .as_ref()
            .map(|a| a[(path * self.grid.n_steps + step) * d * d + row * d + col])
    }

    /// Samples of the projected coordinate at a time-grid node.
    pub fn marginal_at_step(&self, step: usize) -> Vec<f64> {
        (0..self.n_paths)
            .map(|p| self.state_proj(p, step))
            .collect()
    }

    /// Nearest grid node to `t`, for checkpoint extraction.
    pub fn step_nearest(&self, t: f64) -> usize {
        let k = ((t - self.grid.t_start) / self.grid.dt()).round() as i64;
        k.clamp(0, self.grid.n_steps as i64) as usize
    }

    /// Shape and mark consistency.
    pub fn validate(&self) -> Result<()> {
        let expect = self.n_paths * (self.grid.n_steps + 1) * self.dim;
        if self.values.len() != expect {
            return Err(CoreError::numeric(format!(
                "ensemble values length {} does not match {} paths x {} steps x dim {}",
                self.values.len(),
                self.n_paths,
                self.grid.n_steps + 1,
                self.dim
            )));
        }
        if let Some(b) = &self.beta {
            if b.len() != self.n_paths * self.grid.n_steps * self.dim {
                return Err(CoreError::numeric("ensemble beta record has wrong shape"));
            }
        }
        if let Some(a) = &self.diff_sq {
            if a.len() != self.n_paths * self.grid.n_steps * self.dim * self.dim {
                return Err(CoreError::numeric(
                    "ensemble diff_sq record has wrong shape",
                ));
            }
        }
        if let Some(th) = &self.theta {
            if th.len() != self.n_paths * self.grid.n_steps {
                return Err(CoreError::numeric("ensemble theta record has wrong shape"));
            }
        }
        for m in &self.jump_marks {
            if m.path as usize >= self.n_paths
                || m.step as usize >= self.grid.n_steps
                || m.y.len() != self.dim
            {
                return Err(CoreError::numeric(
                    "jump mark references an invalid path/step/dimension",
                ));
            }
        }
        if self.proj_coord >= self.dim {
            return Err(CoreError::numeric("projection coordinate out of range"));
        }
        Ok(())
    }

    /// Drop the recorded characteristics, keeping only the state values.
    /// Frees the bulk of the memory once projection is done.
    pub fn strip_records(&mut self) {
        self.beta = None;
        self.diff_sq = None;
        self.theta = None;
    }
}
