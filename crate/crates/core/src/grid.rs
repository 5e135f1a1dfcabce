//! Uniform time and state grids.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Uniform partition of `[t_start, t_end]` into `n_steps` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_start.is_finite()) || t_end <= t_start {
            return Err(CoreError::config(format!(
                "time grid requires t_end > t_start, got [{t_start}, {t_end}]"
            )));
        }
        if n_steps == 0 {
            return Err(CoreError::config("time grid requires n_steps >= 1"));
        }
        let g = TimeGrid {
            t_start,
            t_end,
            n_steps,
        };
        if g.dt() <= 0.0 {
            return Err(CoreError::config("time grid step underflows to zero"));
        }
        Ok(g)
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_steps as f64
    }

    /// t_k for k = 0..=n_steps.
    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        self.t_start + self.dt() * k as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }

    /// Index of the step containing `t` (clamped to the last step).
    #[inline]
    pub fn step_index(&self, t: f64) -> usize {
        if t <= self.t_start {
            return 0;
        }
        let k = ((t - self.t_start) / self.dt()).floor() as usize;
        k.min(self.n_steps - 1)
    }
}

/// Uniform state grid used for coefficient fields and densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl UniformGrid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(CoreError::config(format!(
                "grid requires hi > lo, got [{lo}, {hi}]"
            )));
        }
        if n < 2 {
            return Err(CoreError::config("grid requires at least 2 nodes"));
        }
        Ok(UniformGrid { lo, hi, n })
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.lo + self.dx() * i as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Locate `x`: `(left index, fraction in [0,1])`, clamped to the grid.
    #[inline]
    pub fn locate(&self, x: f64) -> (usize, f64) {
        if x <= self.lo {
            return (0, 0.0);
        }
        if x >= self.hi {
            return (self.n - 2, 1.0);
        }
        let s = (x - self.lo) / self.dx();
        let i = (s.floor() as usize).min(self.n - 2);
        (i, s - i as f64)
    }

    /// Linear interpolation of a nodal field, clamped at the edges.
    #[inline]
    pub fn interp(&self, field: &[f64], x: f64) -> f64 {
        debug_assert_eq!(field.len(), self.n);
        let (i, w) = self.locate(x);
        field[i] * (1.0 - w) + field[i + 1] * w
    }

    /// Trapezoid quadrature weight of node `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n - 1 {
            0.5 * self.dx()
        } else {
            self.dx()
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}
