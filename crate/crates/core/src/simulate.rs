//! Euler path simulation of the source semimartingale and of the projected
//! Markov SDE.
//!
//! Time stepping is explicit Euler with jump thinning. Jump marks with state
//! increment below norm 1 are compensated by subtracting the corresponding
//! drift (quadrature, cached whenever the amplitude does not read the path
//! state). Increments of norm >= 1 are applied uncompensated, matching the
//! truncation convention of the generator.
//!
//! Every path draws from its own counter-based stream, so results are
//! bit-identical for a fixed `(model, grid, n_paths, seed)` regardless of how
//! paths are scheduled across threads.

use rayon::prelude::*;

use crate::coeffs::ProjectedCoefficients;
use crate::ensemble::{JumpMark, PathEnsemble};
use crate::error::{CoreError, Result};
use crate::grid::TimeGrid;
use crate::levy::{JumpSampler, LevyDensitySpec, SmallJumpMode};
use crate::model::{InitialLaw, ItoModel, JumpSpec, PathState, ThetaDynamics, TimeChangeSpec};
use crate::quad::adaptive_simpson;
use crate::rng::{derive_seed, PathRng};

/// Norm threshold below which jump increments are compensated. Increments at
/// exactly the threshold count as large (uncompensated).
const TRUNCATION_RADIUS: f64 = 1.0;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Small-jump compensation drift at `(t, state)`:
/// `∫ ψ(t, s, y) 1_{|ψ| < 1} ν(dy)` over the simulated marks.
fn compensation_drift(
    dim: usize,
    levy: &LevyDensitySpec,
    amplitude: Option<&crate::model::AmplitudeFn>,
    t: f64,
    state: PathState<'_>,
    out: &mut Vec<f64>,
) {
    out.clear();
    out.resize(dim, 0.0);
    let mut incr = vec![0.0; dim];
    match levy {
        LevyDensitySpec::FiniteActivity { intensity, jump } => match jump {
            crate::levy::JumpDistribution::Atoms { atoms } => {
                for (p, y) in atoms {
                    match amplitude {
                        Some(psi) => psi(t, state, y, &mut incr),
                        None => incr.copy_from_slice(y),
                    }
                    if norm(&incr) < TRUNCATION_RADIUS {
                        for (o, v) in out.iter_mut().zip(incr.iter()) {
                            *o += intensity * p * v;
                        }
                    }
                }
            }
            crate::levy::JumpDistribution::Density { pdf, support } => {
                for c in 0..dim {
                    let f = |y: f64| {
                        let ya = [y];
                        let mut inc = vec![0.0; dim];
                        match amplitude {
                            Some(psi) => psi(t, state, &ya, &mut inc),
                            None => inc[0] = y,
                        }
                        if norm(&inc) < TRUNCATION_RADIUS {
                            intensity * pdf(y) * inc[c]
                        } else {
                            0.0
                        }
                    };
                    out[c] = adaptive_simpson(&f, support.0, support.1, 1e-9);
                }
            }
        },
        LevyDensitySpec::InfiniteActivity {
            density,
            support,
            cutoff,
            ..
        } => {
            // only the simulated band cutoff <= |y| < 1 needs compensation;
            // sub-cutoff jumps are mean-zero by construction
            let f = |y: f64| y * density(y);
            let (la, lb) = (support.0.max(-TRUNCATION_RADIUS), -cutoff);
            let (ha, hb) = (*cutoff, support.1.min(TRUNCATION_RADIUS));
            let lo = if lb > la {
                adaptive_simpson(&f, la, lb, 1e-9)
            } else {
                0.0
            };
            let hi = if hb > ha {
                adaptive_simpson(&f, ha, hb, 1e-9)
            } else {
                0.0
            };
            out[0] = lo + hi;
        }
        LevyDensitySpec::StableTail {
            remainder, ..
        } => {
            // the stable part is symmetric, so its band integral vanishes
            let mut rem = Vec::new();
            compensation_drift(dim, remainder, amplitude, t, state, &mut rem);
            out.copy_from_slice(&rem);
        }
    }
}

struct JumpEngine {
    sampler: Option<JumpSampler>,
    /// Variance rate of the Gaussian substitute for sub-cutoff jumps.
    small_var: f64,
    /// Per-step compensation drift when the amplitude is state-free.
    comp_cache: Option<Vec<Vec<f64>>>,
}

fn build_jump_engine(model: &ItoModel, grid: &TimeGrid) -> Result<JumpEngine> {
    match &model.jumps {
        JumpSpec::None | JumpSpec::CompensatorDirect { .. } => Ok(JumpEngine {
            sampler: None,
            small_var: 0.0,
            comp_cache: None,
        }),
        JumpSpec::PoissonDriven {
            levy,
            amplitude,
            amplitude_state_free,
        } => {
            if matches!(
                levy,
                LevyDensitySpec::InfiniteActivity { .. } | LevyDensitySpec::StableTail { .. }
            ) {
                if model.dim != 1 {
                    return Err(CoreError::config(
                        "infinite-activity jumps are supported in dimension 1 only",
                    ));
                }
                if amplitude.is_some() {
                    return Err(CoreError::config(
                        "infinite-activity jumps require the identity amplitude",
                    ));
                }
            }
            let sampler = levy.sampler()?;
            let small_var = match levy.small_jump_mode() {
                Some(SmallJumpMode::GaussianMomentMatch) => levy.small_jump_variance()?,
                _ => 0.0,
            };
            let comp_cache = if amplitude.is_none() || *amplitude_state_free {
                let dummy_x = vec![0.0; model.dim];
                let dummy_aux = model.aux_init.clone();
                let state = PathState {
                    x: &dummy_x,
                    aux: &dummy_aux,
                };
                let mut cache = Vec::with_capacity(grid.n_steps);
                let mut buf = Vec::new();
                for k in 0..grid.n_steps {
                    compensation_drift(
                        model.dim,
                        levy,
                        amplitude.as_deref(),
                        grid.time(k),
                        state,
                        &mut buf,
                    );
                    cache.push(buf.clone());
                }
                Some(cache)
            } else {
                None
            };
            Ok(JumpEngine {
                sampler: Some(sampler),
                small_var,
                comp_cache,
            })
        }
    }
}

/// Simulate the source model on `grid` with `n_paths` paths.
///
/// Records per-step drift and squared diffusion (all coordinates) and the
/// realized jump marks, as the projector requires.
pub fn simulate_ito(
    model: &ItoModel,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    model.validate()?;
    if n_paths == 0 {
        return Err(CoreError::config("n_paths must be at least 1"));
    }
    let d = model.dim;
    let m = model.noise_dim;
    let n_steps = grid.n_steps;
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let engine = build_jump_engine(model, grid)?;

    let sv = (n_steps + 1) * d;
    let sb = n_steps * d;
    let sa = n_steps * d * d;
    let mut values = vec![0.0; n_paths * sv];
    let mut beta = vec![0.0; n_paths * sb];
    let mut diff_sq = vec![0.0; n_paths * sa];

    let marks: Result<Vec<Vec<JumpMark>>> = values
        .par_chunks_mut(sv)
        .zip(beta.par_chunks_mut(sb))
        .zip(diff_sq.par_chunks_mut(sa))
        .enumerate()
        .map(|(p, ((vals, bet), dsq))| {
            let mut rng = PathRng::new(seed, p as u64);
            let mut marks = Vec::new();
            let mut aux = model.aux_init.clone();
            let mut drift = vec![0.0; d];
            let mut diff = vec![0.0; d * m];
            let mut noise = vec![0.0; m];
            let mut jump_buf: Vec<f64> = Vec::new();
            let mut incr = vec![0.0; d];
            let mut comp = Vec::new();

            model.initial.sample(&mut rng, &mut vals[0..d]);
            for k in 0..n_steps {
                let t = grid.time(k);
                let (head, tail) = vals.split_at_mut((k + 1) * d);
                let x = &head[k * d..(k + 1) * d];
                let state = PathState { x, aux: &aux };

                (model.drift)(t, state, &mut drift);
                (model.diffusion)(t, state, &mut diff);
                for (c, &bv) in drift.iter().enumerate() {
                    if !bv.is_finite() {
                        return Err(CoreError::numeric(format!(
                            "drift oracle returned {bv} at path {p}, step {k}"
                        )));
                    }
                    bet[k * d + c] = bv;
                }
                for r in 0..d {
                    for c2 in 0..d {
                        let mut s = 0.0;
                        for q in 0..m {
                            s += diff[r * m + q] * diff[c2 * m + q];
                        }
                        if !s.is_finite() {
                            return Err(CoreError::numeric(format!(
                                "diffusion oracle produced a non-finite value at path {p}, step {k}"
                            )));
                        }
                        dsq[k * d * d + r * d + c2] = s;
                    }
                }

                let next = &mut tail[0..d];
                for q in 0..m {
                    noise[q] = rng.normal();
                }
                for r in 0..d {
                    let mut dw = 0.0;
                    for q in 0..m {
                        dw += diff[r * m + q] * noise[q];
                    }
                    next[r] = x[r] + drift[r] * dt + dw * sqrt_dt;
                }

                match &model.jumps {
                    JumpSpec::None => {}
                    JumpSpec::PoissonDriven {
                        amplitude, levy, ..
                    } => {
                        let sampler = engine.sampler.as_ref().unwrap();
                        match &engine.comp_cache {
                            Some(cache) => comp.clone_from(&cache[k]),
                            None => compensation_drift(
                                d,
                                levy,
                                amplitude.as_deref(),
                                t,
                                state,
                                &mut comp,
                            ),
                        }
                        for r in 0..d {
                            next[r] -= comp[r] * dt;
                        }
                        if engine.small_var > 0.0 {
                            next[0] += (engine.small_var * dt).sqrt() * rng.normal();
                        }
                        let count = rng.poisson(sampler.intensity * dt);
                        for _ in 0..count {
                            sampler.sample(&mut rng, &mut jump_buf);
                            match amplitude {
                                Some(psi) => psi(t, state, &jump_buf, &mut incr),
                                None => incr.copy_from_slice(&jump_buf),
                            }
                            for r in 0..d {
                                next[r] += incr[r];
                            }
                            marks.push(JumpMark {
                                path: p as u32,
                                step: k as u32,
                                y: incr.clone(),
                            });
                        }
                    }
                    JumpSpec::CompensatorDirect {
                        density,
                        support,
                        density_bound,
                        ..
                    } => {
                        // dominate m(t,x,y) dy by density_bound over the support
                        let span = support.1 - support.0;
                        let rate = density_bound * span;
                        let count = rng.poisson(rate * dt);
                        for _ in 0..count {
                            let y = support.0 + span * rng.uniform();
                            let dens = density(t, state, y);
                            if dens < 0.0 || !dens.is_finite() {
                                return Err(CoreError::numeric(format!(
                                    "compensator density invalid ({dens}) at path {p}, step {k}"
                                )));
                            }
                            if rng.uniform() * density_bound < dens {
                                next[0] += y;
                                marks.push(JumpMark {
                                    path: p as u32,
                                    step: k as u32,
                                    y: vec![y],
                                });
                            }
                        }
                        // band compensation by fixed-node trapezoid
                        let lo = support.0.max(-TRUNCATION_RADIUS);
                        let hi = support.1.min(TRUNCATION_RADIUS);
                        if hi > lo {
                            let nq = 129;
                            let h = (hi - lo) / (nq - 1) as f64;
                            let mut c = 0.0;
                            for iq in 0..nq {
                                let y = lo + h * iq as f64;
                                let w = if iq == 0 || iq == nq - 1 { 0.5 } else { 1.0 };
                                c += w * y * density(t, state, y);
                            }
                            next[0] -= c * h * dt;
                        }
                    }
                }

                for (r, v) in next.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(CoreError::numeric(format!(
                            "state became non-finite at path {p}, step {}, coordinate {r}",
                            k + 1
                        )));
                    }
                }
                if let Some(hook) = &model.aux_hook {
                    hook(grid.time(k + 1), dt, next, &mut aux);
                }
            }
            Ok(marks)
        })
        .collect();

    let jump_marks: Vec<JumpMark> = marks?.into_iter().flatten().collect();
    let ensemble = PathEnsemble {
        grid: *grid,
        dim: d,
        n_paths,
        seed,
        proj_coord: model.proj_coord,
        values,
        beta: Some(beta),
        diff_sq: Some(diff_sq),
        theta: None,
        jump_marks,
        edge_clamps: 0,
        tail_draws: 0,
    };
    ensemble.validate()?;
    Ok(ensemble)
}

/// Per-slice tables for simulating the projected SDE.
struct ProjectedTables {
    /// Total jump intensity per (slice, node), tail included.
    lambda: Vec<f64>,
    lambda_max: Vec<f64>,
    /// Small-jump compensation drift per (slice, node).
    comp: Vec<f64>,
    /// Node-mass CDF per (slice, node): flat [k][i][j].
    cdf: Vec<f64>,
    tail: Vec<f64>,
    ny: usize,
}

fn build_projected_tables(coeffs: &ProjectedCoefficients) -> ProjectedTables {
    let nk = coeffs.n_slices();
    let nz = coeffs.z_grid.n;
    match &coeffs.kernel {
        None => ProjectedTables {
            lambda: vec![0.0; nk * nz],
            lambda_max: vec![0.0; nk],
            comp: vec![0.0; nk * nz],
            cdf: Vec::new(),
            tail: vec![0.0; nk * nz],
            ny: 0,
        },
        Some(kernel) => {
            let ny = kernel.y_grid.n;
            let mut lambda = vec![0.0; nk * nz];
            let mut comp = vec![0.0; nk * nz];
            let mut cdf = vec![0.0; nk * nz * ny];
            let mut lambda_max = vec![0.0; nk];
            for k in 0..nk {
                for i in 0..nz {
                    let mut acc = 0.0;
                    let mut c = 0.0;
                    for j in 0..ny {
                        let y = kernel.y_grid.node(j);
                        let mass = kernel.density(k, j, i, nz) * kernel.y_grid.weight(j);
                        acc += mass;
                        if y.abs() < TRUNCATION_RADIUS {
                            c += y * mass;
                        }
                        cdf[(k * nz + i) * ny + j] = acc;
                    }
                    let lam = acc + kernel.tail[k * nz + i];
                    lambda[k * nz + i] = lam;
                    comp[k * nz + i] = c;
                    if lam > lambda_max[k] {
                        lambda_max[k] = lam;
                    }
                }
            }
            ProjectedTables {
                lambda,
                lambda_max,
                comp,
                cdf,
                tail: kernel.tail.clone(),
                ny,
            }
        }
    }
}

/// Warnings produced while simulating the projected SDE.
#[derive(Debug, Clone, Default)]
pub struct ProjectedSimWarnings {
    /// Slices where thinning accuracy degrades (Λ_max · Δt > 0.5).
    pub thinning_slices: Vec<usize>,
}

/// Euler simulation of the mimicking SDE from gridded coefficients.
///
/// Drift and diffusion are interpolated linearly in the state; jumps are
/// sampled by thinning against the per-slice maximal intensity, sizes by
/// inverse CDF over the y-grid node masses (uniform within a node's cell).
/// Excursions beyond the state grid use the edge values and are counted, as
/// are sizes drawn from the lumped tail mass.
pub fn simulate_projected(
    coeffs: &ProjectedCoefficients,
    initial: &InitialLaw,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<(PathEnsemble, ProjectedSimWarnings)> {
    coeffs.validate()?;
    if n_paths == 0 {
        return Err(CoreError::config("n_paths must be at least 1"));
    }
    if initial.dim() != 1 {
        return Err(CoreError::config("projected simulation is one-dimensional"));
    }
    let n_steps = grid.n_steps;
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let tables = build_projected_tables(coeffs);
    let nz = coeffs.z_grid.n;

    let mut warnings = ProjectedSimWarnings::default();
    for (k, &lm) in tables.lambda_max.iter().enumerate() {
        if lm * dt > 0.5 {
            warnings.thinning_slices.push(k);
        }
    }

    let slice_of_step: Vec<usize> = (0..n_steps)
        .map(|k| coeffs.slice_for_time(grid.time(k)))
        .collect();
    let small = coeffs.small_jump.as_ref();

    let sv = n_steps + 1;
    let mut values = vec![0.0; n_paths * sv];
    let mut beta = vec![0.0; n_paths * n_steps];
    let mut diff_sq = vec![0.0; n_paths * n_steps];

    struct PathOut {
        marks: Vec<JumpMark>,
        clamps: u64,
        tail_draws: u64,
    }

    let outs: Result<Vec<PathOut>> = values
        .par_chunks_mut(sv)
        .zip(beta.par_chunks_mut(n_steps))
        .zip(diff_sq.par_chunks_mut(n_steps))
        .enumerate()
        .map(|(p, ((vals, bet), dsq))| {
            let mut rng = PathRng::new(seed, p as u64);
            let mut marks = Vec::new();
            let mut clamps = 0u64;
            let mut tail_draws = 0u64;
            let mut init = [0.0];
            initial.sample(&mut rng, &mut init);
            vals[0] = init[0];
            for k in 0..n_steps {
                let kc = slice_of_step[k];
                let x = vals[k];
                if !coeffs.z_grid.contains(x) {
                    clamps += 1;
                }
                let b = coeffs.b_at(kc, x);
                let sig = coeffs.sigma_at(kc, x);
                let a = coeffs.a_at(kc, x);
                if a < 0.0 {
                    return Err(CoreError::numeric(format!(
                        "interpolated squared diffusion negative at path {p}, step {k}"
                    )));
                }
                bet[k] = b;
                dsq[k] = a;
                let mut next = x + b * dt + sig * sqrt_dt * rng.normal();

                if tables.ny > 0 {
                    let lam_max = tables.lambda_max[kc];
                    let row = kc * nz;
                    let lam = coeffs.z_grid.interp(&tables.lambda[row..row + nz], x);
                    let comp = coeffs.z_grid.interp(&tables.comp[row..row + nz], x);
                    next -= comp * dt;
                    if lam_max > 0.0 {
                        let candidates = rng.poisson(lam_max * dt);
                        for _ in 0..candidates {
                            if rng.uniform() * lam_max >= lam {
                                continue;
                            }
                            // size from the nearest node's kernel row
                            let (il, w) = coeffs.z_grid.locate(x);
                            let i_node = if w < 0.5 { il } else { il + 1 };
                            let cdf_row =
                                &tables.cdf[(kc * nz + i_node) * tables.ny..][..tables.ny];
                            let grid_mass = *cdf_row.last().unwrap();
                            let tail_mass = tables.tail[kc * nz + i_node];
                            let total = grid_mass + tail_mass;
                            if total <= 0.0 {
                                continue;
                            }
                            let yg = &coeffs.kernel.as_ref().unwrap().y_grid;
                            let u = rng.uniform() * total;
                            let y = if u >= grid_mass {
                                // lumped at a grid edge, sign split evenly
                                tail_draws += 1;
                                if rng.uniform() < 0.5 {
                                    yg.lo
                                } else {
                                    yg.hi
                                }
                            } else {
                                let j = match cdf_row
                                    .binary_search_by(|c| c.partial_cmp(&u).unwrap())
                                {
                                    Ok(j) => j,
                                    Err(j) => j.min(tables.ny - 1),
                                };
                                let half = 0.5 * yg.weight(j);
                                let center = yg.node(j)
                                    + if j == 0 {
                                        0.5 * half
                                    } else if j == yg.n - 1 {
                                        -0.5 * half
                                    } else {
                                        0.0
                                    };
                                center + (rng.uniform() - 0.5) * 2.0 * half
                            };
                            next += y;
                            marks.push(JumpMark {
                                path: p as u32,
                                step: k as u32,
                                y: vec![y],
                            });
                        }
                    }
                }
                if let Some(sj) = small {
                    if sj.mode == SmallJumpMode::GaussianMomentMatch {
                        let row = kc * nz;
                        let var = coeffs
                            .z_grid
                            .interp(&sj.variance[row..row + nz], x)
                            .max(0.0);
                        if var > 0.0 {
                            next += (var * dt).sqrt() * rng.normal();
                        }
                    }
                }
                if !next.is_finite() {
                    return Err(CoreError::numeric(format!(
                        "projected state became non-finite at path {p}, step {}",
                        k + 1
                    )));
                }
                vals[k + 1] = next;
            }
            Ok(PathOut {
                marks,
                clamps,
                tail_draws,
            })
        })
        .collect();

    let outs = outs?;
    let mut jump_marks = Vec::new();
    let mut edge_clamps = 0;
    let mut tail_draws = 0;
    for o in outs {
        jump_marks.extend(o.marks);
        edge_clamps += o.clamps;
        tail_draws += o.tail_draws;
    }

    let ensemble = PathEnsemble {
        grid: *grid,
        dim: 1,
        n_paths,
        seed,
        proj_coord: 0,
        values,
        beta: Some(beta),
        diff_sq: Some(diff_sq),
        theta: None,
        jump_marks,
        edge_clamps,
        tail_draws,
    };
    ensemble.validate()?;
    Ok((ensemble, warnings))
}

/// Simulate a time-changed Lévy process, recording the rate `θ` along paths.
///
/// The base triplet runs on the clock `Θ_t = ∫ θ_s ds`: over one step the
/// state gains `b θ Δt + σ √(θ Δt) G` plus jumps at intensity scaled by `θ`.
pub fn simulate_time_changed(
    spec: &TimeChangeSpec,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    spec.validate(&grid.times())?;
    if n_paths == 0 {
        return Err(CoreError::config("n_paths must be at least 1"));
    }
    let n_steps = grid.n_steps;
    let dt = grid.dt();
    let (sampler, small_var, comp_rate) = match &spec.base_levy {
        None => (None, 0.0, 0.0),
        Some(levy) => {
            let sampler = levy.sampler()?;
            let small_var = match levy.small_jump_mode() {
                Some(SmallJumpMode::GaussianMomentMatch) => levy.small_jump_variance()?,
                _ => 0.0,
            };
            // band compensation per unit of operational time
            let mut buf = Vec::new();
            let x = [0.0];
            let aux: Vec<f64> = Vec::new();
            compensation_drift(1, levy, None, 0.0, PathState { x: &x, aux: &aux }, &mut buf);
            (Some(sampler), small_var, buf[0])
        }
    };

    let sv = n_steps + 1;
    let mut values = vec![0.0; n_paths * sv];
    let mut beta = vec![0.0; n_paths * n_steps];
    let mut diff_sq = vec![0.0; n_paths * n_steps];
    let mut theta_rec = vec![0.0; n_paths * n_steps];

    let sigma = spec.base_sigma2.sqrt();
    let marks: Result<Vec<Vec<JumpMark>>> = values
        .par_chunks_mut(sv)
        .zip(beta.par_chunks_mut(n_steps))
        .zip(diff_sq.par_chunks_mut(n_steps))
        .zip(theta_rec.par_chunks_mut(n_steps))
        .enumerate()
        .map(|(p, (((vals, bet), dsq), th))| {
            let mut rng = PathRng::new(seed, p as u64);
            let mut marks = Vec::new();
            let mut init = [0.0];
            spec.initial.sample(&mut rng, &mut init);
            vals[0] = init[0];
            let mut log_theta = 0.0f64;
            let mut jump_buf = Vec::new();
            for k in 0..n_steps {
                let t = grid.time(k);
                let theta = match &spec.theta {
                    ThetaDynamics::Deterministic(f) => f(t),
                    ThetaDynamics::Lognormal { .. } => log_theta.exp(),
                };
                if theta <= 0.0 || !theta.is_finite() {
                    return Err(CoreError::numeric(format!(
                        "time-change rate invalid ({theta}) at path {p}, step {k}"
                    )));
                }
                th[k] = theta;
                bet[k] = spec.base_drift * theta;
                dsq[k] = spec.base_sigma2 * theta;
                let op_dt = theta * dt;
                let mut next = vals[k] + spec.base_drift * op_dt
                    + sigma * op_dt.sqrt() * rng.normal()
                    - comp_rate * op_dt;
                if small_var > 0.0 {
                    next += (small_var * op_dt).sqrt() * rng.normal();
                }
                if let Some(s) = &sampler {
                    let count = rng.poisson(s.intensity * op_dt);
                    for _ in 0..count {
                        s.sample(&mut rng, &mut jump_buf);
                        next += jump_buf[0];
                        marks.push(JumpMark {
                            path: p as u32,
                            step: k as u32,
                            y: vec![jump_buf[0]],
                        });
                    }
                }
                if !next.is_finite() {
                    return Err(CoreError::numeric(format!(
                        "time-changed state became non-finite at path {p}, step {}",
                        k + 1
                    )));
                }
                vals[k + 1] = next;
                if let ThetaDynamics::Lognormal { vol } = &spec.theta {
                    log_theta += vol * dt.sqrt() * rng.normal() - 0.5 * vol * vol * dt;
                }
            }
            Ok(marks)
        })
        .collect();

    let jump_marks: Vec<JumpMark> = marks?.into_iter().flatten().collect();
    let ensemble = PathEnsemble {
        grid: *grid,
        dim: 1,
        n_paths,
        seed,
        proj_coord: 0,
        values,
        beta: Some(beta),
        diff_sq: Some(diff_sq),
        theta: Some(theta_rec),
        jump_marks,
        edge_clamps: 0,
        tail_draws: 0,
    };
    ensemble.validate()?;
    Ok(ensemble)
}

/// Fixed stage labels so each pipeline phase draws from its own seed family.
pub mod seed_domain {
    pub const SOURCE: u64 = 1;
    pub const RESIMULATE: u64 = 2;
    pub const ORACLE: u64 = 3;
}

/// Seed for a pipeline stage derived from the master seed.
pub fn stage_seed(master: u64, domain: u64) -> u64 {
    derive_seed(master, domain)
}
