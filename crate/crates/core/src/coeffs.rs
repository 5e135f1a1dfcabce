//! Gridded projection outputs: coefficient fields, jump kernels, densities,
//! mimicking reports, and the assumption-audit configuration.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::UniformGrid;
use crate::levy::SmallJumpMode;

/// Jump kernel tabulated as a density in `y` on a fixed grid, per
/// `(time slice, state node)`, plus the explicit mass beyond the grid edge.
///
/// `n[(k * ny + j) * nz + i]` is the density at `y_j` given state `z_i` at
/// slice `k`; `tail[k * nz + i]` the mass outside `[y_min, y_max]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JumpKernelGrid {
    pub y_grid: UniformGrid,
    pub n: Vec<f64>,
    pub tail: Vec<f64>,
}

impl JumpKernelGrid {
    #[inline]
    pub fn density(&self, k: usize, j: usize, i: usize, nz: usize) -> f64 {
        self.n[(k * self.y_grid.n + j) * nz + i]
    }

    /// Total intensity at `(k, i)`: discrete integral over the grid plus the
    /// recorded tail mass.
    pub fn total_intensity(&self, k: usize, i: usize, nz: usize) -> f64 {
        let mut lam = 0.0;
        for j in 0..self.y_grid.n {
            lam += self.density(k, j, i, nz) * self.y_grid.weight(j);
        }
        lam + self.tail[k * nz + i]
    }
}

/// Gaussian substitute for sub-cutoff jumps carried by closed-form
/// projections of infinite-activity models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmallJumpField {
    pub epsilon: f64,
    pub mode: SmallJumpMode,
    /// Variance rate per `(k, i)`.
    pub variance: Vec<f64>,
}

/// The projected local characteristics `(b, a, n)` on a `(t, z)` grid.
///
/// `a` is stored as `sigma * sigma` so the pair stays exactly consistent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectedCoefficients {
    /// Left endpoints of the simulation steps the slices belong to.
    pub times: Vec<f64>,
    pub z_grid: UniformGrid,
    pub b: Vec<f64>,
    pub a: Vec<f64>,
    pub sigma: Vec<f64>,
    pub kernel: Option<JumpKernelGrid>,
    pub small_jump: Option<SmallJumpField>,
    /// Declared bound for the discrete `∫ (1 ∧ y²) n` audit.
    pub integrability_bound: f64,
    /// Cells `(k, i)` whose estimate was filled from a neighbor.
    pub fill_flags: Vec<(u32, u32)>,
}

impl ProjectedCoefficients {
    pub fn n_slices(&self) -> usize {
        self.times.len()
    }

    #[inline]
    pub fn idx(&self, k: usize, i: usize) -> usize {
        k * self.z_grid.n + i
    }

    /// Build from closed-form fields (no jump kernel).
    pub fn from_fields(
        times: Vec<f64>,
        z_grid: UniformGrid,
        b_fn: impl Fn(f64, f64) -> f64,
        a_fn: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let nz = z_grid.n;
        let mut b = Vec::with_capacity(times.len() * nz);
        let mut a = Vec::with_capacity(times.len() * nz);
        let mut sigma = Vec::with_capacity(times.len() * nz);
        for &t in &times {
            for i in 0..nz {
                let z = z_grid.node(i);
                let av = a_fn(t, z);
                if av < 0.0 {
                    return Err(CoreError::numeric(format!(
                        "squared diffusion negative at (t={t}, z={z})"
                    )));
                }
                let s = av.sqrt();
                b.push(b_fn(t, z));
                sigma.push(s);
                a.push(s * s);
            }
        }
        let out = ProjectedCoefficients {
            times,
            z_grid,
            b,
            a,
            sigma,
            kernel: None,
            small_jump: None,
            integrability_bound: f64::INFINITY,
            fill_flags: Vec::new(),
        };
        out.validate()?;
        Ok(out)
    }

    /// Type invariants: nonnegative `a` and kernel, `sigma² = a` exactly,
    /// integrability bound respected, finite fields.
    pub fn validate(&self) -> Result<()> {
        let nz = self.z_grid.n;
        let nk = self.times.len();
        if self.b.len() != nk * nz || self.a.len() != nk * nz || self.sigma.len() != nk * nz {
            return Err(CoreError::numeric("coefficient field shape mismatch"));
        }
        for (idx, (&a, &s)) in self.a.iter().zip(self.sigma.iter()).enumerate() {
            if !(a >= 0.0) || !a.is_finite() {
                return Err(CoreError::numeric(format!(
                    "squared diffusion invalid at flat index {idx}: {a}"
                )));
            }
            if s * s != a {
                return Err(CoreError::numeric(
                    "sigma is not exactly the square root pair of a",
                ));
            }
        }
        if self.b.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::numeric("drift field contains non-finite values"));
        }
        if let Some(kernel) = &self.kernel {
            if kernel.n.len() != nk * kernel.y_grid.n * nz || kernel.tail.len() != nk * nz {
                return Err(CoreError::numeric("jump kernel shape mismatch"));
            }
            if kernel.n.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                return Err(CoreError::numeric("jump kernel has negative entries"));
            }
            if kernel.tail.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                return Err(CoreError::numeric("jump kernel tail mass negative"));
            }
            // discrete ∫ (1 ∧ y²) n bounded; tail mass counts with weight 1
            for k in 0..nk {
                for i in 0..nz {
                    let mut int = kernel.tail[k * nz + i];
                    for j in 0..kernel.y_grid.n {
                        let y = kernel.y_grid.node(j);
                        int += (1.0f64).min(y * y)
                            * kernel.density(k, j, i, nz)
                            * kernel.y_grid.weight(j);
                    }
                    if int > self.integrability_bound {
                        return Err(CoreError::numeric(format!(
                            "kernel integrability {int:.6} exceeds declared bound {} at (k={k}, i={i})",
                            self.integrability_bound
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn b_at(&self, k: usize, z: f64) -> f64 {
        let nz = self.z_grid.n;
        self.z_grid.interp(&self.b[k * nz..(k + 1) * nz], z)
    }

    pub fn sigma_at(&self, k: usize, z: f64) -> f64 {
        let nz = self.z_grid.n;
        self.z_grid.interp(&self.sigma[k * nz..(k + 1) * nz], z)
    }

    pub fn a_at(&self, k: usize, z: f64) -> f64 {
        let nz = self.z_grid.n;
        self.z_grid.interp(&self.a[k * nz..(k + 1) * nz], z)
    }

    /// Slice index for a simulation time (left-constant in time; never
    /// smoothed across slices).
    pub fn slice_for_time(&self, t: f64) -> usize {
        match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(k) => k,
            Err(0) => 0,
            Err(k) => k - 1,
        }
    }
}

/// Gridded marginal density at checkpoint times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityField {
    pub x_grid: UniformGrid,
    pub times: Vec<f64>,
    /// `p[k * nx + i]`.
    pub p: Vec<f64>,
}

impl DensityField {
    pub fn slice(&self, k: usize) -> &[f64] {
        &self.p[k * self.x_grid.n..(k + 1) * self.x_grid.n]
    }

    /// Discrete mass `Σ p Δx` of slice `k`.
    pub fn mass(&self, k: usize) -> f64 {
        self.slice(k).iter().sum::<f64>() * self.x_grid.dx()
    }

    /// From a closure, normalized to unit discrete mass.
    pub fn from_density(x_grid: UniformGrid, t: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut p: Vec<f64> = (0..x_grid.n).map(|i| f(x_grid.node(i))).collect();
        let mass: f64 = p.iter().sum::<f64>() * x_grid.dx();
        if mass <= 0.0 || !mass.is_finite() {
            return Err(CoreError::numeric(format!(
                "initial density has invalid mass {mass}"
            )));
        }
        p.iter_mut().for_each(|v| *v /= mass);
        Ok(DensityField {
            x_grid,
            times: vec![t],
            p,
        })
    }

    /// Mass within tolerance at every slice; negativity monitored, never
    /// clipped.
    pub fn validate(&self) -> Result<()> {
        if self.p.len() != self.times.len() * self.x_grid.n {
            return Err(CoreError::numeric("density field shape mismatch"));
        }
        for k in 0..self.times.len() {
            let mass = self.mass(k);
            if (mass - 1.0).abs() > 1e-3 {
                return Err(CoreError::numeric(format!(
                    "density mass {mass:.6} at t = {} outside [0.999, 1.001]",
                    self.times[k]
                )));
            }
            let min = self.slice(k).iter().cloned().fold(f64::INFINITY, f64::min);
            if min < -1e-8 {
                return Err(CoreError::numeric(format!(
                    "density at t = {} dips to {min:.3e}",
                    self.times[k]
                )));
            }
        }
        Ok(())
    }

    /// CDF values at the grid nodes (cumulative trapezoid, clamped to [0,1]).
    pub fn cdf(&self, k: usize) -> Vec<f64> {
        let p = self.slice(k);
        let dx = self.x_grid.dx();
        let mut cdf = vec![0.0; p.len()];
        let mut acc = 0.0;
        for i in 1..p.len() {
            acc += 0.5 * (p[i - 1] + p[i]) * dx;
            cdf[i] = acc;
        }
        let total = cdf[p.len() - 1];
        if total > 0.0 {
            cdf.iter_mut().for_each(|v| *v = (*v / total).clamp(0.0, 1.0));
        }
        cdf
    }
}

/// Thresholds and radii for the assumption audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionAuditConfig {
    /// Bound on drift / diffusion norms.
    pub k1: f64,
    /// Bound on the `(1 ∧ y²)` jump integral.
    pub k2: f64,
    /// Bound on the stable-remainder integral.
    pub k3: f64,
    /// Ellipticity floor for the squared diffusion.
    pub ellipticity_floor: f64,
    /// Expected stable exponent when a stable tail is declared.
    pub stable_beta: Option<f64>,
    /// Radii at which jump tail masses are reported.
    pub tail_radii: Vec<f64>,
}

impl AssumptionAuditConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k2 > 0.0 && self.k3 > 0.0 && self.ellipticity_floor > 0.0) {
            return Err(CoreError::config("audit bounds must all be positive"));
        }
        if self.tail_radii.iter().any(|&r| r <= 0.0) {
            return Err(CoreError::config("tail radii must be positive"));
        }
        Ok(())
    }
}

impl Default for AssumptionAuditConfig {
    fn default() -> Self {
        AssumptionAuditConfig {
            k1: 100.0,
            k2: 100.0,
            k3: 100.0,
            ellipticity_floor: 1e-6,
            stable_beta: None,
            tail_radii: vec![1.0, 2.0, 4.0, 8.0],
        }
    }
}
