//! Estimation and closed-form construction of the projected coefficients
//! `(b, a, n)`: the state-conditional expectations of the local
//! characteristics.
//!
//! The nonparametric route regresses recorded drift and squared diffusion on
//! the pre-jump state with a Gaussian kernel, slice by slice in time (never
//! smoothing across slices). Each sample distributes exactly unit mass over
//! the state nodes, so occupation-weighted averages of the estimates
//! reproduce plain sample means to rounding accuracy.
//!
//! The closed-form routes cover scalar functions of a Markov process (slice
//! integrals against the density of the underlying process, normalized to be
//! genuine conditional expectations) and time-changed Lévy processes (one
//! regressed rate field scaling the whole base triplet).

use rayon::prelude::*;

use crate::coeffs::{JumpKernelGrid, ProjectedCoefficients, SmallJumpField};
use crate::ensemble::PathEnsemble;
use crate::error::{CoreError, Result};
use crate::grid::UniformGrid;
use crate::levy::{JumpDistribution, LevyDensitySpec, SmallJumpMode};
use crate::model::{CompensatorFn, FunctionOfMarkovSpec, PathState};
use crate::quad::{adaptive_simpson, adaptive_simpson_2d};

/// How conditional expectations are estimated on the state grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    /// Gaussian-kernel weights (Nadaraya-Watson with per-sample
    /// normalization).
    Kernel,
    /// Nearest-node histogram.
    Histogram,
}

/// Settings for the nonparametric projector.
#[derive(Debug, Clone)]
pub struct ProjectionSettings {
    pub z_grid: UniformGrid,
    /// Jump-size grid; required when the ensemble carries jumps.
    pub y_grid: Option<UniformGrid>,
    /// Kernel bandwidth; Silverman's rule per slice when absent.
    pub bandwidth: Option<f64>,
    pub mode: EstimatorMode,
    /// Cells with fewer effective samples are filled from the nearest
    /// populated neighbor and flagged.
    pub min_cell_count: f64,
    pub integrability_bound: f64,
}

impl ProjectionSettings {
    pub fn new(z_grid: UniformGrid) -> Self {
        ProjectionSettings {
            z_grid,
            y_grid: None,
            bandwidth: None,
            mode: EstimatorMode::Kernel,
            min_cell_count: 50.0,
            integrability_bound: f64::INFINITY,
        }
    }

    pub fn with_y_grid(mut self, y_grid: UniformGrid) -> Self {
        self.y_grid = Some(y_grid);
        self
    }

    pub fn with_bandwidth(mut self, h: f64) -> Self {
        self.bandwidth = Some(h);
        self
    }

    pub fn with_min_cell_count(mut self, c: f64) -> Self {
        self.min_cell_count = c;
        self
    }

    pub fn with_mode(mut self, mode: EstimatorMode) -> Self {
        self.mode = mode;
        self
    }
}

/// Where the jump kernel comes from.
pub enum JumpKernelSource<'a> {
    /// No jumps in the model.
    None,
    /// Histogram of realized jump marks per (state bin, size bin),
    /// normalized by occupation time.
    Marks,
    /// Regression of a directly observable compensator density.
    Direct(&'a CompensatorFn),
}

/// Window half-width of the truncated Gaussian kernel, in bandwidths.
const KERNEL_CUTOFF: f64 = 8.0;

/// Per-sample node weights summing exactly to one.
///
/// Returns the node range `[i0, i1)` and writes the weights into `buf`.
fn sample_weights(
    grid: &UniformGrid,
    z: f64,
    h: f64,
    mode: EstimatorMode,
    buf: &mut Vec<f64>,
) -> (usize, usize) {
    buf.clear();
    match mode {
        EstimatorMode::Histogram => {
            let (il, w) = grid.locate(z);
            let i = if w < 0.5 { il } else { il + 1 };
            buf.push(1.0);
            (i, i + 1)
        }
        EstimatorMode::Kernel => {
            let lo = grid.locate(z - KERNEL_CUTOFF * h).0;
            let hi = (grid.locate(z + KERNEL_CUTOFF * h).0 + 2).min(grid.n);
            let mut total = 0.0;
            for i in lo..hi {
                let u = (grid.node(i) - z) / h;
                let w = (-0.5 * u * u).exp();
                buf.push(w);
                total += w;
            }
            if total <= 0.0 {
                // far outside the grid: full mass on the clamped nearest node
                buf.clear();
                let (il, w) = grid.locate(z);
                let i = if w < 0.5 { il } else { il + 1 };
                buf.push(1.0);
                return (i, i + 1);
            }
            for w in buf.iter_mut() {
                *w /= total;
            }
            (lo, hi)
        }
    }
}

/// Silverman's rule on one slice's sample, floored to stay usable on
/// degenerate (constant) slices.
fn silverman_bandwidth(zs: &[f64], grid: &UniformGrid) -> f64 {
    let m = crate::diagnostics::sample_moments(zs);
    let sd = m.variance.sqrt();
    let h = 1.06 * sd * (zs.len() as f64).powf(-0.2);
    h.max(1e-3 * (grid.hi - grid.lo)).min(grid.hi - grid.lo)
}

struct SliceEstimate {
    b: Vec<f64>,
    a: Vec<f64>,
    kernel: Option<Vec<f64>>, // [j][i] densities
    tail: Option<Vec<f64>>,
    filled: Vec<u32>,
}

/// Fill nodes with occupancy below the threshold from the nearest populated
/// node. Returns the filled node indices.
fn fill_sparse_cells(values: &mut [Vec<&mut [f64]>], occ: &[f64], min_count: f64) -> Vec<u32> {
    let n = occ.len();
    let mut filled = Vec::new();
    let populated: Vec<usize> = (0..n).filter(|&i| occ[i] >= min_count).collect();
    if populated.is_empty() {
        return (0..n as u32).collect();
    }
    for i in 0..n {
        if occ[i] >= min_count {
            continue;
        }
        let nearest = *populated
            .iter()
            .min_by_key(|&&j| (j as i64 - i as i64).unsigned_abs())
            .unwrap();
        for group in values.iter_mut() {
            for field in group.iter_mut() {
                field[i] = field[nearest];
            }
        }
        filled.push(i as u32);
    }
    filled
}

/// Nonparametric estimate of the projected coefficients from an ensemble.
///
/// `b(t_k, z_i)` and `a(t_k, z_i)` are kernel regressions of the recorded
/// drift and squared diffusion of the projected coordinate on the pre-jump
/// state; the jump kernel comes from realized marks (histogram per size bin
/// over occupation time) or from regressing a directly observable
/// compensator density.
pub fn estimate_projected_coefficients(
    ensemble: &PathEnsemble,
    settings: &ProjectionSettings,
    source: JumpKernelSource<'_>,
) -> Result<ProjectedCoefficients> {
    ensemble.validate()?;
    let beta = ensemble
        .beta
        .as_ref()
        .ok_or_else(|| CoreError::config("ensemble carries no recorded drift"))?;
    let diff_sq = ensemble
        .diff_sq
        .as_ref()
        .ok_or_else(|| CoreError::config("ensemble carries no recorded squared diffusion"))?;
    if let Some(h) = settings.bandwidth {
        if h <= 0.0 {
            return Err(CoreError::config("bandwidth must be positive"));
        }
    }
    let needs_y = !matches!(source, JumpKernelSource::None);
    if needs_y && settings.y_grid.is_none() {
        return Err(CoreError::config(
            "jump kernel estimation requires a y grid",
        ));
    }

    let n_steps = ensemble.grid.n_steps;
    let n_paths = ensemble.n_paths;
    let d = ensemble.dim;
    let pc = ensemble.proj_coord;
    let grid = &settings.z_grid;
    let nz = grid.n;
    let dt = ensemble.grid.dt();

    // group marks by step for the histogram route
    let mut marks_by_step: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n_steps];
    if matches!(source, JumpKernelSource::Marks) {
        for m in &ensemble.jump_marks {
            let z = ensemble.state_proj(m.path as usize, m.step as usize);
            marks_by_step[m.step as usize].push((z, m.y[pc]));
        }
    }

    let slices: Vec<SliceEstimate> = (0..n_steps)
        .into_par_iter()
        .map(|k| {
            let zs: Vec<f64> = (0..n_paths).map(|p| ensemble.state_proj(p, k)).collect();
            let h = settings
                .bandwidth
                .unwrap_or_else(|| silverman_bandwidth(&zs, grid));
            let mut occ = vec![0.0; nz];
            let mut num_b = vec![0.0; nz];
            let mut num_a = vec![0.0; nz];
            let mut wbuf = Vec::new();
            for (p, &z) in zs.iter().enumerate() {
                let bv = beta[(p * n_steps + k) * d + pc];
                let av = diff_sq[(p * n_steps + k) * d * d + pc * d + pc];
                let (i0, i1) = sample_weights(grid, z, h, settings.mode, &mut wbuf);
                for (off, i) in (i0..i1).enumerate() {
                    let w = wbuf[off];
                    occ[i] += w;
                    num_b[i] += w * bv;
                    num_a[i] += w * av;
                }
            }
            let mut b_row = vec![0.0; nz];
            let mut a_row = vec![0.0; nz];
            for i in 0..nz {
                if occ[i] > 0.0 {
                    b_row[i] = num_b[i] / occ[i];
                    a_row[i] = num_a[i] / occ[i];
                }
            }

            // jump kernel for this slice
            let (mut kern, mut tail) = match (&source, settings.y_grid.as_ref()) {
                (JumpKernelSource::Marks, Some(yg)) => {
                    let ny = yg.n;
                    let mut counts = vec![0.0; ny * nz];
                    let mut tail_counts = vec![0.0; nz];
                    for &(z, y) in &marks_by_step[k] {
                        let (i0, i1) = sample_weights(grid, z, h, settings.mode, &mut wbuf);
                        // node-centered size bins; beyond the half-cell edges
                        // counts as tail
                        let (jl, wj) = yg.locate(y);
                        let j = if wj < 0.5 { jl } else { jl + 1 };
                        let in_grid = y >= yg.lo - 0.5 * yg.dx() && y <= yg.hi + 0.5 * yg.dx();
                        for (off, i) in (i0..i1).enumerate() {
                            let w = wbuf[off];
                            if in_grid {
                                counts[j * nz + i] += w;
                            } else {
                                tail_counts[i] += w;
                            }
                        }
                    }
                    let mut n_field = vec![0.0; ny * nz];
                    let mut tail_field = vec![0.0; nz];
                    for i in 0..nz {
                        if occ[i] > 0.0 {
                            for j in 0..ny {
                                n_field[j * nz + i] =
                                    counts[j * nz + i] / (occ[i] * dt * yg.weight(j));
                            }
                            tail_field[i] = tail_counts[i] / (occ[i] * dt);
                        }
                    }
                    (Some(n_field), Some(tail_field))
                }
                (JumpKernelSource::Direct(density), Some(yg)) => {
                    let ny = yg.n;
                    let t = ensemble.grid.time(k);
                    let mut num_n = vec![0.0; ny * nz];
                    let aux: Vec<f64> = Vec::new();
                    let mut xrow = vec![0.0; d];
                    for p in 0..n_paths {
                        for c in 0..d {
                            xrow[c] = ensemble.value(p, k, c);
                        }
                        let state = PathState { x: &xrow, aux: &aux };
                        let (i0, i1) =
                            sample_weights(grid, xrow[pc], h, settings.mode, &mut wbuf);
                        for j in 0..ny {
                            let mv = density(t, state, yg.node(j));
                            for (off, i) in (i0..i1).enumerate() {
                                num_n[j * nz + i] += wbuf[off] * mv;
                            }
                        }
                    }
                    let mut n_field = vec![0.0; ny * nz];
                    for i in 0..nz {
                        if occ[i] > 0.0 {
                            for j in 0..ny {
                                n_field[j * nz + i] = num_n[j * nz + i] / occ[i];
                            }
                        }
                    }
                    (Some(n_field), Some(vec![0.0; nz]))
                }
                _ => (None, None),
            };

            // fill sparsely populated cells from the nearest populated node
            let filled = {
                let mut groups: Vec<Vec<&mut [f64]>> = Vec::new();
                let mut fields: Vec<&mut [f64]> = vec![&mut b_row, &mut a_row];
                if let Some(kf) = kern.as_mut() {
                    fields.extend(kf.chunks_mut(nz));
                }
                if let Some(tf) = tail.as_mut() {
                    fields.push(tf);
                }
                groups.push(fields);
                fill_sparse_cells(&mut groups, &occ, settings.min_cell_count)
            };

            SliceEstimate {
                b: b_row,
                a: a_row,
                kernel: kern,
                tail,
                filled,
            }
        })
        .collect();

    // assemble
    let times: Vec<f64> = (0..n_steps).map(|k| ensemble.grid.time(k)).collect();
    let mut b = Vec::with_capacity(n_steps * nz);
    let mut a = Vec::with_capacity(n_steps * nz);
    let mut sigma = Vec::with_capacity(n_steps * nz);
    let mut fill_flags = Vec::new();
    let has_kernel = slices.first().map(|s| s.kernel.is_some()).unwrap_or(false);
    let mut kern_all = Vec::new();
    let mut tail_all = Vec::new();
    for (k, s) in slices.iter().enumerate() {
        for i in 0..nz {
            let av = s.a[i];
            if av < 0.0 {
                return Err(CoreError::numeric(format!(
                    "regressed squared diffusion negative at (k={k}, i={i}): {av}"
                )));
            }
            let sg = av.sqrt();
            b.push(s.b[i]);
            sigma.push(sg);
            a.push(sg * sg);
        }
        for &i in &s.filled {
            fill_flags.push((k as u32, i));
        }
        if has_kernel {
            kern_all.extend_from_slice(s.kernel.as_ref().unwrap());
            tail_all.extend_from_slice(s.tail.as_ref().unwrap());
        }
    }

    let coeffs = ProjectedCoefficients {
        times,
        z_grid: settings.z_grid.clone(),
        b,
        a,
        sigma,
        kernel: if has_kernel {
            Some(JumpKernelGrid {
                y_grid: settings.y_grid.clone().unwrap(),
                n: kern_all,
                tail: tail_all,
            })
        } else {
            None
        },
        small_jump: None,
        integrability_bound: settings.integrability_bound,
        fill_flags,
    };
    coeffs.validate()?;
    Ok(coeffs)
}

/// Occupancy masses per (slice, node) for an ensemble under the same
/// weighting the projector uses. Exposed for weight-accounting checks.
pub fn occupation_masses(
    ensemble: &PathEnsemble,
    settings: &ProjectionSettings,
    k: usize,
) -> Vec<f64> {
    let grid = &settings.z_grid;
    let zs: Vec<f64> = (0..ensemble.n_paths)
        .map(|p| ensemble.state_proj(p, k))
        .collect();
    let h = settings
        .bandwidth
        .unwrap_or_else(|| silverman_bandwidth(&zs, grid));
    let mut occ = vec![0.0; grid.n];
    let mut wbuf = Vec::new();
    for &z in &zs {
        let (i0, i1) = sample_weights(grid, z, h, settings.mode, &mut wbuf);
        for (off, i) in (i0..i1).enumerate() {
            occ[i] += wbuf[off];
        }
    }
    occ
}

/// Conditioning problem for the slice formula: a density `q` on a working
/// box, the functional `f`, and its partial derivative in the last
/// coordinate.
pub struct SliceProblem<'a> {
    pub dim: usize,
    pub domain: &'a [(f64, f64)],
    pub q: &'a dyn Fn(&[f64]) -> f64,
    pub f: &'a dyn Fn(&[f64]) -> f64,
    pub df_dzd: &'a dyn Fn(&[f64]) -> f64,
    pub tol: f64,
}

impl<'a> SliceProblem<'a> {
    /// Solve `f(head, ζ) = w` for ζ on the last axis; `None` when the level
    /// set misses this column.
    fn solve_last(&self, head: &[f64], w: f64) -> Option<f64> {
        let (lo, hi) = self.domain[self.dim - 1];
        let eval = |zd: f64| {
            let mut z = Vec::with_capacity(self.dim);
            z.extend_from_slice(head);
            z.push(zd);
            (self.f)(&z) - w
        };
        crate::quad::find_root(&eval, lo, hi, 1e-10).ok()
    }

    /// Sliced-density integrand `q(z', F) / |∂f/∂z_d(z', F)|` times `g`.
    fn slice_integrand(&self, head: &[f64], w: f64, g: &dyn Fn(&[f64]) -> f64) -> f64 {
        match self.solve_last(head, w) {
            None => 0.0,
            Some(zd) => {
                let mut z = head.to_vec();
                z.push(zd);
                let jac = (self.df_dzd)(&z).abs();
                if jac <= 0.0 || !jac.is_finite() {
                    return 0.0;
                }
                g(&z) * (self.q)(&z) / jac
            }
        }
    }

    /// Unnormalized slice integral of `g` over the level set `{f = w}`.
    pub fn slice_integral(&self, g: &dyn Fn(&[f64]) -> f64, w: f64) -> Result<f64> {
        match self.dim {
            1 => Ok(self.slice_integrand(&[], w, g)),
            2 => {
                let (lo, hi) = self.domain[0];
                Ok(adaptive_simpson(
                    &|z1| self.slice_integrand(&[z1], w, g),
                    lo,
                    hi,
                    self.tol,
                ))
            }
            3 => {
                let d0 = self.domain[0];
                let d1 = self.domain[1];
                Ok(adaptive_simpson_2d(
                    &|z1, z2| self.slice_integrand(&[z1, z2], w, g),
                    d0,
                    d1,
                    self.tol,
                ))
            }
            d => Err(CoreError::config(format!(
                "slice quadrature supports up to 3 dimensions, got {d}"
            ))),
        }
    }
}

/// Normalized conditional expectation `E[g(Z) | f(Z) = w]`.
///
/// The sliced-density integral of `g` divided by the same integral with
/// `g = 1`; the division makes the slice a genuine conditional expectation.
pub fn conditional_expectation_slice(
    problem: &SliceProblem<'_>,
    g: &dyn Fn(&[f64]) -> f64,
    w: f64,
) -> Result<f64> {
    let den = problem.slice_integral(&|_| 1.0, w)?;
    if den.abs() < 1e-300 {
        return Err(CoreError::numeric(format!(
            "conditioning on a null event: sliced density mass {den:.3e} at w = {w}"
        )));
    }
    let num = problem.slice_integral(g, w)?;
    Ok(num / den)
}

/// Output of the function-of-Markov projection: the gridded coefficients
/// plus the raw jump tail function samples (`j(t, [u, ∞), w)` for `u > 0`,
/// `j(t, (−∞, u], w)` for `u < 0`).
pub struct FunctionOfMarkovProjection {
    pub coeffs: ProjectedCoefficients,
    /// `tail[(k * nu + j) * nw + i]` sampled on `u_grid`; empty without jumps.
    pub jump_tail: Vec<f64>,
    pub u_grid: Option<UniformGrid>,
}

impl FunctionOfMarkovProjection {
    pub fn tail_at(&self, k: usize, j: usize, i: usize) -> f64 {
        let nu = self.u_grid.as_ref().map(|g| g.n).unwrap_or(0);
        let nw = self.coeffs.z_grid.n;
        let _ = nu;
        self.jump_tail[(k * self.u_grid.as_ref().unwrap().n + j) * nw + i]
    }
}

/// Closed-form projection of `ξ = f(Z)` for a Markov `Z` with known density.
///
/// Every field is the normalized slice integral of the corresponding local
/// characteristic; the jump measure is built from its tail function on the
/// `u` grid and differentiated to a density.
pub fn project_function_of_markov(
    spec: &FunctionOfMarkovSpec,
    times: &[f64],
    w_grid: &UniformGrid,
    u_grid: Option<&UniformGrid>,
    tol: f64,
) -> Result<FunctionOfMarkovProjection> {
    spec.audit_monotonicity(if spec.dim <= 2 { 33 } else { 9 })?;
    let d = spec.dim;
    let nw = w_grid.n;
    let nk = times.len();
    let has_jumps = spec.jumps.is_some();
    if has_jumps && u_grid.is_none() {
        return Err(CoreError::config(
            "jump projection requires a u grid for the size distribution",
        ));
    }

    let mut b = vec![0.0; nk * nw];
    let mut a = vec![0.0; nk * nw];
    let mut sigma = vec![0.0; nk * nw];
    let (nu_nodes, mut tail_all) = match u_grid {
        Some(g) if has_jumps => (g.n, vec![0.0; nk * g.n * nw]),
        _ => (0, Vec::new()),
    };
    let mut kern_all = if has_jumps {
        vec![0.0; nk * nu_nodes * nw]
    } else {
        Vec::new()
    };
    let mut kern_tail = if has_jumps {
        vec![0.0; nk * nw]
    } else {
        Vec::new()
    };

    for (k, &t) in times.iter().enumerate() {
        let q_t = |z: &[f64]| (spec.q)(t, z);
        let f_ref = |z: &[f64]| (spec.f)(z);
        let df = |z: &[f64]| {
            let mut g = vec![0.0; d];
            (spec.grad_f)(z, &mut g);
            g[d - 1]
        };
        let problem = SliceProblem {
            dim: d,
            domain: &spec.domain,
            q: &q_t,
            f: &f_ref,
            df_dzd: &df,
            tol,
        };

        // drift integrand: ∇f·b_Z + ½ tr(∇²f ΣΣᵀ) + ∫ (f(z+ψ) − f(z) − ψ·∇f) ν
        let drift_g = |z: &[f64]| {
            let mut grad = vec![0.0; d];
            (spec.grad_f)(z, &mut grad);
            let mut bz = vec![0.0; d];
            (spec.b_z)(t, z, &mut bz);
            let mut val: f64 = grad.iter().zip(bz.iter()).map(|(g, b)| g * b).sum();
            let mut hess = vec![0.0; d * d];
            (spec.hess_f)(z, &mut hess);
            let mut sig = vec![0.0; d * d];
            (spec.sigma_z)(t, z, &mut sig);
            // tr(H Σ Σᵀ)
            for r in 0..d {
                for c in 0..d {
                    let mut ssq = 0.0;
                    for q in 0..d {
                        ssq += sig[r * d + q] * sig[c * d + q];
                    }
                    val += 0.5 * hess[r * d + c] * ssq;
                }
            }
            if let Some(j) = &spec.jumps {
                val += jump_drift_term(spec, j, t, z, &grad);
            }
            val
        };
        // squared diffusion integrand: ‖∇fᵀ Σ‖²
        let diff_g = |z: &[f64]| {
            let mut grad = vec![0.0; d];
            (spec.grad_f)(z, &mut grad);
            let mut sig = vec![0.0; d * d];
            (spec.sigma_z)(t, z, &mut sig);
            let mut val = 0.0;
            for q in 0..d {
                let mut comp = 0.0;
                for r in 0..d {
                    comp += grad[r] * sig[r * d + q];
                }
                val += comp * comp;
            }
            val
        };

        for i in 0..nw {
            let w = w_grid.node(i);
            let den = problem.slice_integral(&|_| 1.0, w)?;
            if den.abs() < 1e-300 {
                return Err(CoreError::numeric(format!(
                    "sliced density mass vanishes at (t={t}, w={w}); shrink the w grid"
                )));
            }
            let bv = problem.slice_integral(&drift_g, w)? / den;
            let av = problem.slice_integral(&diff_g, w)? / den;
            if av < -1e-12 {
                return Err(CoreError::numeric(format!(
                    "projected squared diffusion negative at (t={t}, w={w}): {av}"
                )));
            }
            let sg = av.max(0.0).sqrt();
            b[k * nw + i] = bv;
            sigma[k * nw + i] = sg;
            a[k * nw + i] = sg * sg;

            if let (Some(jumps), Some(ug)) = (&spec.jumps, u_grid) {
                for j in 0..ug.n {
                    let u = ug.node(j);
                    let tail_g = |z: &[f64]| jump_tail_term(spec, jumps, t, z, u);
                    let tv = problem.slice_integral(&tail_g, w)? / den;
                    tail_all[(k * ug.n + j) * nw + i] = tv;
                }
            }
        }

        // differentiate the tail function to a size density on the u grid;
        // the positive and negative axes carry different tail conventions, so
        // each segment is differenced on its own side of the origin
        if let (Some(_), Some(ug)) = (&spec.jumps, u_grid) {
            let du = ug.dx();
            let first_pos = (0..ug.n).find(|&j| ug.node(j) > 0.0).unwrap_or(ug.n);
            let last_neg = (0..ug.n).rev().find(|&j| ug.node(j) < 0.0);
            for i in 0..nw {
                let tail_at = |j: usize| tail_all[(k * ug.n + j) * nw + i];
                for j in 0..ug.n {
                    let u = ug.node(j);
                    let dens = if u > 0.0 {
                        let jm = if j > first_pos { j - 1 } else { j };
                        let jp = (j + 1).min(ug.n - 1);
                        -(tail_at(jp) - tail_at(jm)) / ((jp - jm).max(1) as f64 * du)
                    } else if u < 0.0 {
                        let jp = match last_neg {
                            Some(ln) if j < ln => j + 1,
                            _ => j,
                        };
                        let jm = j.saturating_sub(1);
                        (tail_at(jp) - tail_at(jm)) / ((jp - jm).max(1) as f64 * du)
                    } else {
                        // no atom at the origin: patch from the neighbors
                        f64::NAN
                    };
                    kern_all[(k * ug.n + j) * nw + i] = if dens.is_nan() { 0.0 } else { dens.max(0.0) };
                }
                // patch the origin node by neighbor continuity
                for j in 0..ug.n {
                    if ug.node(j) == 0.0 && j > 0 && j + 1 < ug.n {
                        let left = kern_all[(k * ug.n + j - 1) * nw + i];
                        let right = kern_all[(k * ug.n + j + 1) * nw + i];
                        kern_all[(k * ug.n + j) * nw + i] = 0.5 * (left + right);
                    }
                }
                // mass beyond the u grid: the tail function at the edges
                kern_tail[k * nw + i] = tail_at(ug.n - 1).max(0.0) + tail_at(0).max(0.0);
            }
        }
    }

    let coeffs = ProjectedCoefficients {
        times: times.to_vec(),
        z_grid: w_grid.clone(),
        b,
        a,
        sigma,
        kernel: match (has_jumps, u_grid) {
            (true, Some(ug)) => Some(JumpKernelGrid {
                y_grid: ug.clone(),
                n: kern_all,
                tail: kern_tail,
            }),
            _ => None,
        },
        small_jump: None,
        integrability_bound: f64::INFINITY,
        fill_flags: Vec::new(),
    };
    coeffs.validate()?;
    Ok(FunctionOfMarkovProjection {
        coeffs,
        jump_tail: tail_all,
        u_grid: u_grid.cloned(),
    })
}

/// `∫ (f(z + ψ(t,z,y)) − f(z) − ψ(t,z,y)·∇f(z)) ν(dy)`.
fn jump_drift_term(
    spec: &FunctionOfMarkovSpec,
    jumps: &crate::model::FunctionOfMarkovJumps,
    t: f64,
    z: &[f64],
    grad: &[f64],
) -> f64 {
    let d = spec.dim;
    let fz = (spec.f)(z);
    let term = |y: &[f64]| -> f64 {
        let mut incr = vec![0.0; d];
        (jumps.amplitude)(t, z, y, &mut incr);
        let z_after: Vec<f64> = z.iter().zip(incr.iter()).map(|(a, b)| a + b).collect();
        let df = (spec.f)(&z_after) - fz;
        let lin: f64 = incr.iter().zip(grad.iter()).map(|(i, g)| i * g).sum();
        df - lin
    };
    match &jumps.levy {
        LevyDensitySpec::FiniteActivity { intensity, jump } => match jump {
            JumpDistribution::Atoms { atoms } => atoms
                .iter()
                .map(|(p, y)| intensity * p * term(y))
                .sum(),
            JumpDistribution::Density { pdf, support } => {
                let f = |y: f64| pdf(y) * term(&[y]);
                intensity * adaptive_simpson(&f, support.0, support.1, 1e-9)
            }
        },
        _ => f64::NAN, // infinite activity not supported on this route
    }
}

/// `ν{y : f(z + ψ(t,z,y)) − f(z) >= u}` for `u > 0` (and the mirrored set
/// for `u < 0`).
fn jump_tail_term(
    spec: &FunctionOfMarkovSpec,
    jumps: &crate::model::FunctionOfMarkovJumps,
    t: f64,
    z: &[f64],
    u: f64,
) -> f64 {
    let d = spec.dim;
    let fz = (spec.f)(z);
    let delta = |y: &[f64]| -> f64 {
        let mut incr = vec![0.0; d];
        (jumps.amplitude)(t, z, y, &mut incr);
        let z_after: Vec<f64> = z.iter().zip(incr.iter()).map(|(a, b)| a + b).collect();
        (spec.f)(&z_after) - fz
    };
    let indicator = |df: f64| -> f64 {
        if u >= 0.0 {
            if df >= u {
                1.0
            } else {
                0.0
            }
        } else if df <= u {
            1.0
        } else {
            0.0
        }
    };
    match &jumps.levy {
        LevyDensitySpec::FiniteActivity { intensity, jump } => match jump {
            JumpDistribution::Atoms { atoms } => atoms
                .iter()
                .map(|(p, y)| intensity * p * indicator(delta(y)))
                .sum(),
            JumpDistribution::Density { pdf, support } => {
                let f = |y: f64| pdf(y) * indicator(delta(&[y]));
                intensity * adaptive_simpson(&f, support.0, support.1, 1e-8)
            }
        },
        _ => f64::NAN,
    }
}

/// Projection of a time-changed Lévy process: one regressed rate field
/// `α(t, z) = E[θ_t | ξ_{t−} = z]` scales drift, squared diffusion and the
/// whole jump measure.
pub fn project_time_changed_levy(
    base_drift: f64,
    base_sigma2: f64,
    base_levy: Option<&LevyDensitySpec>,
    ensemble: &PathEnsemble,
    settings: &ProjectionSettings,
) -> Result<ProjectedCoefficients> {
    ensemble.validate()?;
    let theta = ensemble
        .theta
        .as_ref()
        .ok_or_else(|| CoreError::config("ensemble carries no recorded time-change rate"))?;
    if base_levy.is_some() && settings.y_grid.is_none() {
        return Err(CoreError::config(
            "projecting a jump base requires a y grid",
        ));
    }
    let n_steps = ensemble.grid.n_steps;
    let n_paths = ensemble.n_paths;
    let grid = &settings.z_grid;
    let nz = grid.n;

    // α̂ per slice
    let alpha_slices: Vec<(Vec<f64>, Vec<f64>, Vec<u32>)> = (0..n_steps)
        .into_par_iter()
        .map(|k| {
            let zs: Vec<f64> = (0..n_paths).map(|p| ensemble.state_proj(p, k)).collect();
            let h = settings
                .bandwidth
                .unwrap_or_else(|| silverman_bandwidth(&zs, grid));
            let mut occ = vec![0.0; nz];
            let mut num = vec![0.0; nz];
            let mut wbuf = Vec::new();
            for (p, &z) in zs.iter().enumerate() {
                let th = theta[p * n_steps + k];
                let (i0, i1) = sample_weights(grid, z, h, settings.mode, &mut wbuf);
                for (off, i) in (i0..i1).enumerate() {
                    occ[i] += wbuf[off];
                    num[i] += wbuf[off] * th;
                }
            }
            let mut alpha = vec![0.0; nz];
            for i in 0..nz {
                if occ[i] > 0.0 {
                    alpha[i] = num[i] / occ[i];
                }
            }
            let mut groups: Vec<Vec<&mut [f64]>> = vec![vec![&mut alpha]];
            let filled = fill_sparse_cells(&mut groups, &occ, settings.min_cell_count);
            (alpha, occ, filled)
        })
        .collect();

    // base jump measure tabulated once on the y grid
    let base_kernel: Option<(Vec<f64>, f64)> = match (base_levy, settings.y_grid.as_ref()) {
        (Some(levy), Some(yg)) => {
            let mut dens = vec![0.0; yg.n];
            match levy {
                LevyDensitySpec::FiniteActivity {
                    intensity,
                    jump: JumpDistribution::Atoms { atoms },
                } => {
                    for (p, y) in atoms {
                        let target = y[0];
                        if target >= yg.lo && target <= yg.hi {
                            let (il, w) = yg.locate(target);
                            let j = if w < 0.5 { il } else { il + 1 };
                            dens[j] += intensity * p / yg.weight(j);
                        }
                    }
                }
                _ => {
                    for (j, v) in dens.iter_mut().enumerate() {
                        let y = yg.node(j);
                        // cut below the simulation cutoff for truncated specs
                        let cutoff = match levy {
                            LevyDensitySpec::InfiniteActivity { cutoff, .. } => *cutoff,
                            LevyDensitySpec::StableTail { cutoff, .. } => *cutoff,
                            _ => 0.0,
                        };
                        *v = if y.abs() <= cutoff {
                            0.0
                        } else {
                            levy.density_at(y)?
                        };
                    }
                }
            }
            // extend half a cell past the nodes: node-centered bins
            let outside =
                levy.mass_outside_interval(yg.lo - 0.5 * yg.dx(), yg.hi + 0.5 * yg.dx())?;
            Some((dens, outside))
        }
        _ => None,
    };

    let times: Vec<f64> = (0..n_steps).map(|k| ensemble.grid.time(k)).collect();
    let mut b = Vec::with_capacity(n_steps * nz);
    let mut a = Vec::with_capacity(n_steps * nz);
    let mut sigma = Vec::with_capacity(n_steps * nz);
    let mut fill_flags = Vec::new();
    let mut kern_all = Vec::new();
    let mut tail_all = Vec::new();
    let small_var_rate = match base_levy {
        Some(levy) => match levy.small_jump_mode() {
            Some(SmallJumpMode::GaussianMomentMatch) => levy.small_jump_variance()?,
            _ => 0.0,
        },
        None => 0.0,
    };
    let mut small_all = Vec::new();

    for (k, (alpha, _occ, filled)) in alpha_slices.iter().enumerate() {
        for &i in filled {
            fill_flags.push((k as u32, i));
        }
        for i in 0..nz {
            let al = alpha[i];
            if al <= 0.0 {
                return Err(CoreError::numeric(format!(
                    "regressed time-change rate must stay positive, got {al} at (k={k}, i={i})"
                )));
            }
            let av = base_sigma2 * al;
            let sg = av.sqrt();
            b.push(base_drift * al);
            sigma.push(sg);
            a.push(sg * sg);
            small_all.push(small_var_rate * al);
        }
        if let Some((dens, outside)) = &base_kernel {
            let yg = settings.y_grid.as_ref().unwrap();
            for j in 0..yg.n {
                for i in 0..nz {
                    kern_all.push(dens[j] * alpha[i]);
                }
            }
            for i in 0..nz {
                tail_all.push(outside * alpha[i]);
            }
        }
    }

    let coeffs = ProjectedCoefficients {
        times,
        z_grid: settings.z_grid.clone(),
        b,
        a,
        sigma,
        kernel: base_kernel.map(|_| JumpKernelGrid {
            y_grid: settings.y_grid.clone().unwrap(),
            n: kern_all,
            tail: tail_all,
        }),
        small_jump: if small_var_rate > 0.0 {
            Some(SmallJumpField {
                epsilon: match base_levy {
                    Some(LevyDensitySpec::InfiniteActivity { cutoff, .. }) => *cutoff,
                    Some(LevyDensitySpec::StableTail { cutoff, .. }) => *cutoff,
                    _ => 0.0,
                },
                mode: SmallJumpMode::GaussianMomentMatch,
                variance: small_all,
            })
        } else {
            None
        },
        integrability_bound: settings.integrability_bound,
        fill_flags,
    };
    coeffs.validate()?;
    Ok(coeffs)
}
