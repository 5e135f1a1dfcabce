//! Semimartingale model descriptions.
//!
//! An [`ItoModel`] packages the drift, diffusion and jump oracles of the
//! source process together with its initial law. Oracles see the pair
//! `(current left-limit state, auxiliary accumulators)` rather than the full
//! path; path-dependent models update the accumulators through a step hook,
//! so memory per path stays O(1).

use std::fmt;
use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::levy::LevyDensitySpec;
use crate::rng::PathRng;

/// View of one path's running information handed to the oracles.
#[derive(Clone, Copy)]
pub struct PathState<'a> {
    /// Current (left-limit) state.
    pub x: &'a [f64],
    /// User-defined accumulators (running averages, clocks, ...).
    pub aux: &'a [f64],
}

pub type DriftFn = dyn Fn(f64, PathState<'_>, &mut [f64]) + Send + Sync;
/// Writes the `d x m` diffusion matrix, row-major.
pub type DiffusionFn = dyn Fn(f64, PathState<'_>, &mut [f64]) + Send + Sync;
/// Maps a jump mark `y` to the state increment.
pub type AmplitudeFn = dyn Fn(f64, PathState<'_>, &[f64], &mut [f64]) + Send + Sync;
/// Compensator density oracle `m(t, state, y)` (scalar marks).
pub type CompensatorFn = dyn Fn(f64, PathState<'_>, f64) -> f64 + Send + Sync;
/// Accumulator update after a completed step: `(t_next, dt, x_next, aux)`.
pub type AuxHookFn = dyn Fn(f64, f64, &[f64], &mut [f64]) + Send + Sync;

/// Initial law of the state.
#[derive(Clone, Debug)]
pub enum InitialLaw {
    Point(Vec<f64>),
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

impl InitialLaw {
    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Point(x) => x.len(),
            InitialLaw::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn sample(&self, rng: &mut PathRng, out: &mut [f64]) {
        match self {
            InitialLaw::Point(x) => out.copy_from_slice(x),
            InitialLaw::Gaussian { mean, std } => {
                for i in 0..mean.len() {
                    out[i] = mean[i] + std[i] * rng.normal();
                }
            }
        }
    }

    /// Density of the projected coordinate, mollified for point masses with
    /// the provided width.
    pub fn density_1d(&self, coord: usize, x: f64, mollify_std: f64) -> f64 {
        match self {
            InitialLaw::Point(p) => {
                let s = mollify_std.max(1e-12);
                crate::quad::normal_pdf((x - p[coord]) / s) / s
            }
            InitialLaw::Gaussian { mean, std } => {
                let s = std[coord].max(mollify_std).max(1e-12);
                crate::quad::normal_pdf((x - mean[coord]) / s) / s
            }
        }
    }
}

/// Jump structure of the model.
#[derive(Clone)]
pub enum JumpSpec {
    None,
    /// Marks from a Poisson random measure with intensity `ν`, mapped through
    /// an optional predictable amplitude (identity when absent).
    PoissonDriven {
        levy: LevyDensitySpec,
        amplitude: Option<Arc<AmplitudeFn>>,
        /// Amplitude does not read the path state; lets the small-jump
        /// compensation integral be cached once.
        amplitude_state_free: bool,
    },
    /// Direct state-dependent compensator density (scalar marks).
    CompensatorDirect {
        density: Arc<CompensatorFn>,
        /// Mark support for quadrature and thinning.
        support: (f64, f64),
        /// Upper bound for the density, used by rejection sampling.
        density_bound: f64,
        /// Upper bound for the total intensity, used by thinning.
        intensity_bound: f64,
    },
}

impl fmt::Debug for JumpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpSpec::None => write!(f, "None"),
            JumpSpec::PoissonDriven { levy, .. } => write!(f, "PoissonDriven({levy:?})"),
            JumpSpec::CompensatorDirect { support, .. } => {
                write!(f, "CompensatorDirect {{ support: {support:?} }}")
            }
        }
    }
}

/// Declared coefficient bounds used by the assumption audit.
#[derive(Clone, Copy, Debug)]
pub struct DeclaredBounds {
    pub sup_drift: f64,
    pub sup_diffusion: f64,
}

impl Default for DeclaredBounds {
    fn default() -> Self {
        DeclaredBounds {
            sup_drift: f64::INFINITY,
            sup_diffusion: f64::INFINITY,
        }
    }
}

/// Full description of the source semimartingale.
#[derive(Clone)]
pub struct ItoModel {
    pub dim: usize,
    pub noise_dim: usize,
    pub initial: InitialLaw,
    pub drift: Arc<DriftFn>,
    pub diffusion: Arc<DiffusionFn>,
    pub jumps: JumpSpec,
    pub aux_init: Vec<f64>,
    pub aux_hook: Option<Arc<AuxHookFn>>,
    pub bounds: DeclaredBounds,
    /// Coordinate whose marginal law is being mimicked.
    pub proj_coord: usize,
}

impl fmt::Debug for ItoModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ItoModel")
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("initial", &self.initial)
            .field("jumps", &self.jumps)
            .field("proj_coord", &self.proj_coord)
            .finish_non_exhaustive()
    }
}

impl ItoModel {
    /// Driftless scalar diffusion shorthand used across tests.
    pub fn scalar(
        initial: InitialLaw,
        drift: impl Fn(f64, PathState<'_>) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(f64, PathState<'_>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ItoModel {
            dim: 1,
            noise_dim: 1,
            initial,
            drift: Arc::new(move |t, s, out: &mut [f64]| out[0] = drift(t, s)),
            diffusion: Arc::new(move |t, s, out: &mut [f64]| out[0] = diffusion(t, s)),
            jumps: JumpSpec::None,
            aux_init: Vec::new(),
            aux_hook: None,
            bounds: DeclaredBounds::default(),
            proj_coord: 0,
        }
    }

    pub fn with_jumps(mut self, jumps: JumpSpec) -> Self {
        self.jumps = jumps;
        self
    }

    pub fn with_aux(
        mut self,
        init: Vec<f64>,
        hook: impl Fn(f64, f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.aux_init = init;
        self.aux_hook = Some(Arc::new(hook));
        self
    }

    pub fn with_bounds(mut self, sup_drift: f64, sup_diffusion: f64) -> Self {
        self.bounds = DeclaredBounds {
            sup_drift,
            sup_diffusion,
        };
        self
    }

    /// Structural validation: shapes, jump spec, amplitude vanishing at 0.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.noise_dim == 0 {
            return Err(CoreError::config("model dimensions must be positive"));
        }
        if self.initial.dim() != self.dim {
            return Err(CoreError::config(format!(
                "initial law dimension {} does not match model dimension {}",
                self.initial.dim(),
                self.dim
            )));
        }
        if self.proj_coord >= self.dim {
            return Err(CoreError::config("projection coordinate out of range"));
        }
        match &self.jumps {
            JumpSpec::None => {}
            JumpSpec::PoissonDriven {
                levy, amplitude, ..
            } => {
                levy.validate()?;
                if let Some(psi) = amplitude {
                    // ψ(t, ., 0) = 0 sampled at a few states
                    let zero = vec![0.0; levy.dim()];
                    let mut out = vec![0.0; self.dim];
                    let x = vec![0.3; self.dim];
                    let aux = self.aux_init.clone();
                    psi(0.0, PathState { x: &x, aux: &aux }, &zero, &mut out);
                    if out.iter().any(|v| v.abs() > 1e-12) {
                        return Err(CoreError::config(
                            "jump amplitude does not vanish at mark 0",
                        ));
                    }
                }
            }
            JumpSpec::CompensatorDirect {
                support,
                density_bound,
                intensity_bound,
                ..
            } => {
                if support.1 <= support.0 {
                    return Err(CoreError::config("compensator support is empty"));
                }
                if *density_bound <= 0.0 || *intensity_bound <= 0.0 {
                    return Err(CoreError::config(
                        "compensator bounds must be positive",
                    ));
                }
            }
        }
        if !(self.bounds.sup_drift > 0.0) || !(self.bounds.sup_diffusion > 0.0) {
            return Err(CoreError::config("declared bounds must be positive"));
        }
        Ok(())
    }
}

/// Time-changed Lévy description: base triplet run on the clock
/// `Θ_t = ∫ θ_s ds`.
#[derive(Clone)]
pub struct TimeChangeSpec {
    pub base_drift: f64,
    pub base_sigma2: f64,
    pub base_levy: Option<LevyDensitySpec>,
    pub theta: ThetaDynamics,
    pub initial: InitialLaw,
}

impl fmt::Debug for TimeChangeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeChangeSpec")
            .field("base_drift", &self.base_drift)
            .field("base_sigma2", &self.base_sigma2)
            .field("base_levy", &self.base_levy)
            .field("initial", &self.initial)
            .finish_non_exhaustive()
    }
}

/// Dynamics of the positive rate process.
#[derive(Clone)]
pub enum ThetaDynamics {
    Deterministic(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// θ_t = exp(σ B'_t − σ² t / 2) driven by an independent Brownian motion.
    Lognormal { vol: f64 },
}

impl TimeChangeSpec {
    pub fn validate(&self, grid_times: &[f64]) -> Result<()> {
        if self.base_sigma2 < 0.0 {
            return Err(CoreError::config("base variance must be nonnegative"));
        }
        if let Some(levy) = &self.base_levy {
            levy.validate()?;
        }
        if let ThetaDynamics::Deterministic(f) = &self.theta {
            for &t in grid_times {
                if f(t) <= 0.0 {
                    return Err(CoreError::config(format!(
                        "time-change rate must be positive, found θ({t}) <= 0"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Scalar functional of a Markov process: `ξ_t = f(Z_t)`.
///
/// `q` is the density of `Z_t`; `f` must be monotone in its last coordinate
/// on the working box so the partial inverse is well defined.
#[derive(Clone)]
pub struct FunctionOfMarkovSpec {
    pub dim: usize,
    /// Working box for quadrature and monotonicity audits.
    pub domain: Vec<(f64, f64)>,
    pub f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub grad_f: Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
    pub hess_f: Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
    /// Density of Z at time t.
    pub q: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
    /// Drift of Z.
    pub b_z: Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>,
    /// Diffusion of Z (d x d, row-major).
    pub sigma_z: Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>,
    /// Jump structure of Z: marks with atoms or density, amplitude on Z.
    pub jumps: Option<FunctionOfMarkovJumps>,
}

#[derive(Clone)]
pub struct FunctionOfMarkovJumps {
    pub levy: LevyDensitySpec,
    /// State increment of Z caused by mark y.
    pub amplitude: Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>,
}

impl FunctionOfMarkovSpec {
    /// Check `∂f/∂z_d` keeps one sign on a sample lattice of the domain.
    pub fn audit_monotonicity(&self, per_axis: usize) -> Result<()> {
        if self.domain.len() != self.dim {
            return Err(CoreError::config("domain/dimension mismatch"));
        }
        let mut grad = vec![0.0; self.dim];
        let mut sign = 0.0f64;
        let mut idx = vec![0usize; self.dim];
        let total = per_axis.pow(self.dim as u32);
        let mut z = vec![0.0; self.dim];
        for flat in 0..total {
            let mut rem = flat;
            for a in 0..self.dim {
                idx[a] = rem % per_axis;
                rem /= per_axis;
                let (lo, hi) = self.domain[a];
                z[a] = lo + (hi - lo) * (idx[a] as f64 + 0.5) / per_axis as f64;
            }
            (self.grad_f)(&z, &mut grad);
            let g = grad[self.dim - 1];
            if g == 0.0 || !g.is_finite() {
                return Err(CoreError::numeric(format!(
                    "∂f/∂z_d vanishes or is not finite at {z:?}"
                )));
            }
            if sign == 0.0 {
                sign = g.signum();
            } else if g.signum() != sign {
                return Err(CoreError::numeric(format!(
                    "∂f/∂z_d changes sign inside the working domain (at {z:?})"
                )));
            }
        }
        Ok(())
    }

    /// Partial inverse: solve `f(z_1..z_{d-1}, ζ) = w` for ζ by bracketed
    /// root finding on the domain's last axis.
    pub fn partial_inverse(&self, head: &[f64], w: f64) -> Result<f64> {
        let (lo, hi) = self.domain[self.dim - 1];
        let mut z = head.to_vec();
        z.push(0.0);
        let f = &self.f;
        let eval = |zd: f64| {
            let mut zz = z.clone();
            zz[self.dim - 1] = zd;
            f(&zz) - w
        };
        crate::quad::find_root(&eval, lo, hi, 1e-10)
    }
}
