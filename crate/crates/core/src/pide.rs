//! Discretization of the integro-differential generator and forward
//! evolution of the marginal density through its transpose.
//!
//! The generator splits into a tridiagonal local part (upwind drift plus
//! central second-difference diffusion) and a sparse jump part (quadrature
//! rows over the kernel's y grid, diagonal subtraction of the total
//! intensity, with the sub-threshold gradient correction folded into the
//! drift). The forward equation is evolved with the exact transpose of this
//! discrete operator, so discrete duality holds to rounding at every step:
//! mass can change only through the reported boundary and tail leakage,
//! never silently.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{DensityField, ProjectedCoefficients};
use crate::error::{CoreError, Result};
use crate::grid::{TimeGrid, UniformGrid};

/// Jump increments with norm below this are folded into the effective drift
/// (strictly below: a point mass exactly at the threshold is a large jump).
const TRUNCATION_RADIUS: f64 = 1.0;

/// Sparse row-major matrix for the jump part (includes its own diagonal).
#[derive(Debug, Clone, Default)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl CsrMatrix {
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let mut acc = 0.0;
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.val[idx] * x[self.col[idx]];
            }
            out[i] = acc;
        }
    }

    /// Exact transpose (same triplets, swapped roles).
    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n + 1];
        for &c in &self.col {
            counts[c + 1] += 1;
        }
        for i in 0..self.n {
            counts[i + 1] += counts[i];
        }
        let mut row_ptr = counts.clone();
        let mut col = vec![0usize; self.val.len()];
        let mut val = vec![0.0; self.val.len()];
        for i in 0..self.n {
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                let c = self.col[idx];
                let pos = row_ptr[c];
                col[pos] = i;
                val[pos] = self.val[idx];
                row_ptr[c] += 1;
            }
        }
        // shift back
        let mut rp = vec![0usize; self.n + 1];
        rp[1..].copy_from_slice(&row_ptr[..self.n]);
        CsrMatrix {
            n: self.n,
            row_ptr: rp,
            col,
            val,
        }
    }
}

/// Discretized generator at one coefficient slice.
///
/// `L f = T f + J f` with `T` tridiagonal (drift + diffusion) and `J` the
/// jump quadrature. Diffusion uses a zero-flux (reflecting) stencil at the
/// edges; outward drift and jump targets beyond the grid leave the domain
/// and are tallied per row in `leak_rate`.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    pub n: usize,
    pub dx: f64,
    /// Tridiagonal local part: `lower[i] = T[i][i-1]`, `diag[i] = T[i][i]`,
    /// `upper[i] = T[i][i+1]`.
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    pub jump: Option<CsrMatrix>,
    jump_t: Option<CsrMatrix>,
    /// Outflow rate per row (drift through the boundary plus jump mass
    /// truncated off the grid): `-(row sum of L)`.
    pub leak_rate: Vec<f64>,
    /// Maximal total jump intensity over rows (CFL control).
    pub max_intensity: f64,
}

impl GeneratorMatrix {
    /// `L f`.
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut acc = self.diag[i] * f[i];
            if i > 0 {
                acc += self.lower[i] * f[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * f[i + 1];
            }
            out[i] = acc;
        }
        if let Some(j) = &self.jump {
            let mut tmp = vec![0.0; n];
            j.apply(f, &mut tmp);
            for i in 0..n {
                out[i] += tmp[i];
            }
        }
    }

    /// `Lᵀ p`: the transpose of the same discrete operator.
    pub fn apply_transpose(&self, p: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut acc = self.diag[i] * p[i];
            if i + 1 < n {
                acc += self.lower[i + 1] * p[i + 1];
            }
            if i > 0 {
                acc += self.upper[i - 1] * p[i - 1];
            }
            out[i] = acc;
        }
        if let Some(jt) = &self.jump_t {
            let mut tmp = vec![0.0; n];
            jt.apply(p, &mut tmp);
            for i in 0..n {
                out[i] += tmp[i];
            }
        }
    }

    /// Row sums of `L` (zero in the interior up to reported truncation).
    pub fn row_sums(&self) -> Vec<f64> {
        let ones = vec![1.0; self.n];
        let mut out = vec![0.0; self.n];
        self.apply(&ones, &mut out);
        out
    }
}

/// Build the discrete generator from gridded coefficients at slice `k`.
///
/// Drift: first-order upwind (for positive drift the generator moves mass
/// right, so the stencil reaches the right neighbor). Diffusion: central
/// second difference of `a/2`. Jumps: for each node, quadrature weights of
/// the kernel row scattered onto `x_i + y_j` by linear interpolation,
/// minus the total intensity on the diagonal; increments below norm one are
/// removed from the scatter and folded into the drift as
/// `-∫_{|y|<1} y n(t, dy, x)`.
pub fn build_generator_matrix(
    coeffs: &ProjectedCoefficients,
    x_grid: &UniformGrid,
    k: usize,
) -> Result<GeneratorMatrix> {
    if k >= coeffs.n_slices() {
        return Err(CoreError::config(format!(
            "slice index {k} out of range ({} slices)",
            coeffs.n_slices()
        )));
    }
    let n = x_grid.n;
    let dx = x_grid.dx();
    let nz = coeffs.z_grid.n;

    // effective drift: b minus the small-jump correction
    let mut drift = vec![0.0; n];
    let mut diff_half = vec![0.0; n];
    for i in 0..n {
        let x = x_grid.node(i);
        drift[i] = coeffs.b_at(k, x);
        let a = coeffs.a_at(k, x);
        if a < 0.0 {
            return Err(CoreError::numeric(format!(
                "squared diffusion negative at x = {x}"
            )));
        }
        diff_half[i] = 0.5 * a;
    }

    let mut leak_rate = vec![0.0; n];
    let mut max_intensity = 0.0f64;
    let (jump, jump_t) = match &coeffs.kernel {
        None => (None, None),
        Some(kernel) => {
            let yg = &kernel.y_grid;
            let ny = yg.n;
            // rows built in parallel, then assembled in order
            let rows: Vec<(Vec<(usize, f64)>, f64, f64, f64)> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let x = x_grid.node(i);
                    let mut entries: Vec<(usize, f64)> = Vec::new();
                    let mut lam = 0.0;
                    let mut small_drift = 0.0;
                    let mut lost = 0.0;
                    for j in 0..ny {
                        let y = yg.node(j);
                        // kernel density interpolated in z at this x
                        let row0 = (k * ny + j) * nz;
                        let dens = coeffs.z_grid.interp(&kernel.n[row0..row0 + nz], x);
                        let w = dens * yg.weight(j);
                        if w == 0.0 {
                            continue;
                        }
                        lam += w;
                        if y.abs() < TRUNCATION_RADIUS {
                            small_drift += y * w;
                        }
                        let target = x + y;
                        if target < x_grid.lo || target > x_grid.hi {
                            lost += w;
                            continue;
                        }
                        let (it, frac) = x_grid.locate(target);
                        if frac < 1e-12 {
                            entries.push((it, w));
                        } else if frac > 1.0 - 1e-12 {
                            entries.push((it + 1, w));
                        } else {
                            entries.push((it, w * (1.0 - frac)));
                            entries.push((it + 1, w * frac));
                        }
                    }
                    let tail0 = k * nz;
                    let tail =
                        coeffs.z_grid.interp(&kernel.tail[tail0..tail0 + nz], x);
                    lam += tail;
                    lost += tail;
                    entries.push((i, -lam));
                    entries.sort_by_key(|e| e.0);
                    // merge duplicate columns
                    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
                    for (c, v) in entries {
                        match merged.last_mut() {
                            Some((lc, lv)) if *lc == c => *lv += v,
                            _ => merged.push((c, v)),
                        }
                    }
                    (merged, lam, small_drift, lost)
                })
                .collect();

            let mut row_ptr = Vec::with_capacity(n + 1);
            let mut col = Vec::new();
            let mut val = Vec::new();
            row_ptr.push(0);
            for (i, (entries, lam, small_drift, lost)) in rows.into_iter().enumerate() {
                for (c, v) in entries {
                    col.push(c);
                    val.push(v);
                }
                row_ptr.push(col.len());
                drift[i] -= small_drift;
                leak_rate[i] += lost;
                max_intensity = max_intensity.max(lam);
            }
            let csr = CsrMatrix {
                n,
                row_ptr,
                col,
                val,
            };
            let csr_t = csr.transpose();
            (Some(csr), Some(csr_t))
        }
    };

    // tridiagonal local part
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..n {
        // upwind drift in generator form: positive drift moves mass right
        let b = drift[i];
        let rate = b.abs() / dx;
        if b > 0.0 {
            if i + 1 < n {
                upper[i] += rate;
                diag[i] -= rate;
            } else {
                // outflow through the right boundary
                diag[i] -= rate;
                leak_rate[i] += rate;
            }
        } else if b < 0.0 {
            if i > 0 {
                lower[i] += rate;
                diag[i] -= rate;
            } else {
                diag[i] -= rate;
                leak_rate[i] += rate;
            }
        }
        // central diffusion with zero-flux edges
        let d = diff_half[i] / (dx * dx);
        if d > 0.0 {
            if i > 0 && i + 1 < n {
                lower[i] += d;
                upper[i] += d;
                diag[i] -= 2.0 * d;
            } else if i == 0 {
                upper[i] += d;
                diag[i] -= d;
            } else {
                lower[i] += d;
                diag[i] -= d;
            }
        }
    }

    Ok(GeneratorMatrix {
        n,
        dx,
        lower,
        diag,
        upper,
        jump,
        jump_t,
        leak_rate,
        max_intensity,
    })
}

/// Time-stepping scheme for the forward equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Local part implicit (tridiagonal solve), jump part explicit.
    Imex,
    /// Fully explicit Euler (needs both CFL conditions).
    Explicit,
}

/// Diagnostics of one forward evolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// Discrete mass after each step (subsampled to checkpoints).
    pub mass_at_checkpoints: Vec<f64>,
    /// Minimum density value seen over the whole run.
    pub min_density: f64,
    /// Mass lost through boundaries and kernel tails, accumulated.
    pub lost_mass: f64,
    /// max over steps of Λ_max · Δt.
    pub cfl_margin: f64,
    pub warnings: Vec<String>,
}

/// Solve `∂p/∂t = Lᵀ p` from `p0` and record the density at the checkpoint
/// times.
///
/// The default IMEX scheme treats drift and diffusion implicitly through the
/// transposed tridiagonal part (Thomas solve) and the jump part explicitly;
/// `Λ_max · Δt > 0.9` is rejected with a suggested step. Mass drift beyond
/// 1e-3 aborts.
pub fn evolve_forward(
    p0: &[f64],
    coeffs: &ProjectedCoefficients,
    x_grid: &UniformGrid,
    grid: &TimeGrid,
    scheme: Scheme,
    checkpoints: &[f64],
) -> Result<(DensityField, SolveDiagnostics)> {
    if p0.len() != x_grid.n {
        return Err(CoreError::config("initial density length mismatch"));
    }
    if p0.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(CoreError::config("initial density must be nonnegative"));
    }
    let dx = x_grid.dx();
    let mass0: f64 = p0.iter().sum::<f64>() * dx;
    if (mass0 - 1.0).abs() > 1e-3 {
        return Err(CoreError::config(format!(
            "initial density mass {mass0:.6} is not 1 within 1e-3"
        )));
    }
    let n = x_grid.n;
    let dt = grid.dt();
    let mut p = p0.to_vec();
    let mut checkpoint_steps: Vec<usize> = checkpoints
        .iter()
        .map(|&t| ((t - grid.t_start) / dt).round() as usize)
        .collect();
    checkpoint_steps.sort_unstable();
    checkpoint_steps.dedup();
    for &s in &checkpoint_steps {
        if s > grid.n_steps {
            return Err(CoreError::config("checkpoint beyond the time grid"));
        }
    }

    let mut out_times = Vec::new();
    let mut out_p = Vec::new();
    let mut mass_at_checkpoints = Vec::new();
    let mut min_density = p.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut lost_mass = 0.0;
    let mut cfl_margin = 0.0f64;
    let mut warnings = Vec::new();

    let record = |step: usize, p: &[f64], mass_list: &mut Vec<f64>,
                  times: &mut Vec<f64>, buf: &mut Vec<f64>| {
        times.push(grid.time(step));
        buf.extend_from_slice(p);
        mass_list.push(p.iter().sum::<f64>() * dx);
    };
    if checkpoint_steps.first() == Some(&0) {
        record(0, &p, &mut mass_at_checkpoints, &mut out_times, &mut out_p);
    }

    // generator rebuilt only when the coefficient slice changes
    let mut current_slice = usize::MAX;
    let mut gen: Option<GeneratorMatrix> = None;
    let mut thomas = ThomasWorkspace::new(n);
    let mut jtp = vec![0.0; n];

    for step in 0..grid.n_steps {
        let t = grid.time(step);
        let kc = coeffs.slice_for_time(t);
        if kc != current_slice {
            let g = build_generator_matrix(coeffs, x_grid, kc)?;
            let margin = g.max_intensity * dt;
            cfl_margin = cfl_margin.max(margin);
            if margin > 0.9 {
                return Err(CoreError::numeric(format!(
                    "jump CFL violated: Λ_max·Δt = {margin:.3}; reduce Δt below {:.3e}",
                    0.9 / g.max_intensity
                )));
            }
            if scheme == Scheme::Explicit {
                let local_rate = g
                    .diag
                    .iter()
                    .map(|v| v.abs())
                    .fold(0.0f64, f64::max);
                if local_rate * dt > 1.0 {
                    return Err(CoreError::numeric(format!(
                        "explicit scheme unstable: local rate·Δt = {:.3}; reduce Δt below {:.3e}",
                        local_rate * dt,
                        1.0 / local_rate
                    )));
                }
            }
            current_slice = kc;
            gen = Some(g);
        }
        let g = gen.as_ref().unwrap();

        match scheme {
            Scheme::Imex => {
                // rhs = p + Δt Jᵀ p ; then (I − Δt Tᵀ) p' = rhs
                match &g.jump_t {
                    Some(jt) => jt.apply(&p, &mut jtp),
                    None => jtp.iter_mut().for_each(|v| *v = 0.0),
                }
                for i in 0..n {
                    jtp[i] = p[i] + dt * jtp[i];
                }
                // Tᵀ: lower' [i] = upper[i-1], diag' = diag, upper'[i] = lower[i+1]
                thomas.solve_transposed(
                    &g.lower,
                    &g.diag,
                    &g.upper,
                    dt,
                    &jtp,
                    &mut p,
                )?;
            }
            Scheme::Explicit => {
                let mut lp = vec![0.0; n];
                g.apply_transpose(&p, &mut lp);
                for i in 0..n {
                    p[i] += dt * lp[i];
                }
            }
        }

        // leakage tally: mass flows out at rate Σ p_i leak_i
        let leak: f64 = p
            .iter()
            .zip(g.leak_rate.iter())
            .map(|(pi, li)| pi * li)
            .sum::<f64>()
            * dt
            * dx;
        lost_mass += leak;

        let mass: f64 = p.iter().sum::<f64>() * dx;
        if (mass - 1.0).abs() > 1e-3 {
            return Err(CoreError::numeric(format!(
                "mass drift {:.3e} at step {} exceeds 1e-3 (mass {mass:.6})",
                mass - 1.0,
                step + 1
            )));
        }
        let mn = p.iter().cloned().fold(f64::INFINITY, f64::min);
        min_density = min_density.min(mn);
        if mn < -1e-8 {
            warnings.push(format!(
                "density dipped to {mn:.3e} at step {}",
                step + 1
            ));
        }

        if checkpoint_steps.binary_search(&(step + 1)).is_ok() {
            record(
                step + 1,
                &p,
                &mut mass_at_checkpoints,
                &mut out_times,
                &mut out_p,
            );
        }
    }

    let field = DensityField {
        x_grid: x_grid.clone(),
        times: out_times,
        p: out_p,
    };
    field.validate()?;
    Ok((
        field,
        SolveDiagnostics {
            mass_at_checkpoints,
            min_density,
            lost_mass,
            cfl_margin,
            warnings,
        },
    ))
}

/// Thomas solver for `(I − Δt Tᵀ) x = rhs` with `T` given by bands.
struct ThomasWorkspace {
    c: Vec<f64>,
    d: Vec<f64>,
}

impl ThomasWorkspace {
    fn new(n: usize) -> Self {
        ThomasWorkspace {
            c: vec![0.0; n],
            d: vec![0.0; n],
        }
    }

    fn solve_transposed(
        &mut self,
        lower: &[f64],
        diag: &[f64],
        upper: &[f64],
        dt: f64,
        rhs: &[f64],
        x: &mut [f64],
    ) -> Result<()> {
        let n = diag.len();
        // A = I − Δt Tᵀ: sub[i] = −Δt upper[i-1], main = 1 − Δt diag,
        // sup[i] = −Δt lower[i+1]
        let main = |i: usize| 1.0 - dt * diag[i];
        let sub = |i: usize| -dt * upper[i - 1];
        let sup = |i: usize| -dt * lower[i + 1];

        let mut beta = main(0);
        if beta.abs() < 1e-300 {
            return Err(CoreError::numeric("tridiagonal solve breakdown at row 0"));
        }
        self.d[0] = rhs[0] / beta;
        for i in 1..n {
            self.c[i - 1] = sup(i - 1) / beta;
            beta = main(i) - sub(i) * self.c[i - 1];
            if beta.abs() < 1e-300 {
                return Err(CoreError::numeric(format!(
                    "tridiagonal solve breakdown at row {i}"
                )));
            }
            self.d[i] = (rhs[i] - sub(i) * self.d[i - 1]) / beta;
        }
        x[n - 1] = self.d[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = self.d[i] - self.c[i] * x[i + 1];
        }
        Ok(())
    }
}
