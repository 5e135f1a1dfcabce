//! Lévy measure descriptions: finite-activity jump distributions, densities
//! with infinite activity near the origin, and stable-dominated tails.
//!
//! A spec validates itself numerically (normalization, `(1 ∧ y²)`
//! integrability) and can produce a sampler for simulation. Infinite-activity
//! measures are simulated after truncation at a cutoff `ε`; the discarded
//! small jumps are either dropped or replaced by a Gaussian with the matched
//! second moment.

use std::fmt;
use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::quad::adaptive_simpson;
use crate::rng::PathRng;

pub type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// How jumps below the cutoff are represented in simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmallJumpMode {
    /// Omit them (their compensated contribution has mean zero).
    Drop,
    /// Replace them by a Gaussian increment with the matched second moment.
    GaussianMomentMatch,
}

/// Distribution of a single jump mark for finite-activity specs.
#[derive(Clone)]
pub enum JumpDistribution {
    /// Normalized density on a bounded support (one-dimensional).
    Density { pdf: DensityFn, support: (f64, f64) },
    /// Discrete marks `(probability, jump vector)`; exact in every quadrature.
    Atoms { atoms: Vec<(f64, Vec<f64>)> },
}

impl fmt::Debug for JumpDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpDistribution::Density { support, .. } => {
                write!(f, "Density {{ support: {support:?} }}")
            }
            JumpDistribution::Atoms { atoms } => write!(f, "Atoms({} marks)", atoms.len()),
        }
    }
}

/// Description of the jump measure `ν`.
#[derive(Clone)]
pub enum LevyDensitySpec {
    /// `λ · jump_pdf`: finitely many jumps per unit time.
    FiniteActivity {
        intensity: f64,
        jump: JumpDistribution,
    },
    /// Density `ν(y)` with possibly infinite mass at the origin, truncated at
    /// `cutoff` for simulation. `support` bounds the numerically relevant
    /// range; the density is treated as negligible outside.
    InfiniteActivity {
        density: DensityFn,
        support: (f64, f64),
        cutoff: f64,
        mode: SmallJumpMode,
    },
    /// `C / |y|^{1+β}` near the origin plus a finite-activity remainder.
    StableTail {
        c: f64,
        beta: f64,
        remainder: Box<LevyDensitySpec>,
        cutoff: f64,
        mode: SmallJumpMode,
    },
}

impl fmt::Debug for LevyDensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevyDensitySpec::FiniteActivity { intensity, jump } => f
                .debug_struct("FiniteActivity")
                .field("intensity", intensity)
                .field("jump", jump)
                .finish(),
            LevyDensitySpec::InfiniteActivity {
                support,
                cutoff,
                mode,
                ..
            } => f
                .debug_struct("InfiniteActivity")
                .field("support", support)
                .field("cutoff", cutoff)
                .field("mode", mode)
                .finish_non_exhaustive(),
            LevyDensitySpec::StableTail {
                c,
                beta,
                remainder,
                cutoff,
                mode,
            } => f
                .debug_struct("StableTail")
                .field("c", c)
                .field("beta", beta)
                .field("remainder", remainder)
                .field("cutoff", cutoff)
                .field("mode", mode)
                .finish(),
        }
    }
}

impl LevyDensitySpec {
    /// Dimension of the jump marks.
    pub fn dim(&self) -> usize {
        match self {
            LevyDensitySpec::FiniteActivity { jump, .. } => match jump {
                JumpDistribution::Density { .. } => 1,
                JumpDistribution::Atoms { atoms } => {
                    atoms.first().map(|(_, y)| y.len()).unwrap_or(1)
                }
            },
            _ => 1,
        }
    }

    /// Validate intensities, normalization (quadrature to 1e-6), the
    /// `(1 ∧ y²)` integrability bound, and stable exponents.
    pub fn validate(&self) -> Result<()> {
        match self {
            LevyDensitySpec::FiniteActivity { intensity, jump } => {
                if !intensity.is_finite() || *intensity < 0.0 {
                    return Err(CoreError::config(format!(
                        "intensity must be a nonnegative finite rate, got {intensity}"
                    )));
                }
                match jump {
                    JumpDistribution::Density { pdf, support } => {
                        if support.1 <= support.0 {
                            return Err(CoreError::config("jump density support is empty"));
                        }
                        let mass = adaptive_simpson(&|y| pdf(y), support.0, support.1, 1e-9);
                        if (mass - 1.0).abs() > 1e-6 {
                            return Err(CoreError::config(format!(
                                "jump density integrates to {mass}, expected 1 within 1e-6"
                            )));
                        }
                    }
                    JumpDistribution::Atoms { atoms } => {
                        if atoms.is_empty() {
                            return Err(CoreError::config("atom list is empty"));
                        }
                        let d = atoms[0].1.len();
                        let mut total = 0.0;
                        for (p, y) in atoms {
                            if *p < 0.0 || y.len() != d {
                                return Err(CoreError::config(
                                    "atom probabilities must be nonnegative with equal dimension",
                                ));
                            }
                            total += p;
                        }
                        if (total - 1.0).abs() > 1e-9 {
                            return Err(CoreError::config(format!(
                                "atom probabilities sum to {total}, expected 1"
                            )));
                        }
                    }
                }
                Ok(())
            }
            LevyDensitySpec::InfiniteActivity {
                density,
                support,
                cutoff,
                ..
            } => {
                if *cutoff <= 0.0 {
                    return Err(CoreError::config(
                        "infinite-activity spec requires a positive small-jump cutoff",
                    ));
                }
                if support.0 >= 0.0 || support.1 <= 0.0 {
                    return Err(CoreError::config(
                        "infinite-activity support must straddle the origin",
                    ));
                }
                let int = self.one_wedge_y2_integral()?;
                if !int.is_finite() {
                    return Err(CoreError::config(
                        "integral of (1 ∧ y²) against the density is not finite",
                    ));
                }
                // density must be nonnegative where we can see it
                for i in 1..100 {
                    let y = support.0 + (support.1 - support.0) * i as f64 / 100.0;
                    if y.abs() > 1e-12 && density(y) < 0.0 {
                        return Err(CoreError::config(format!("density negative at y = {y}")));
                    }
                }
                Ok(())
            }
            LevyDensitySpec::StableTail {
                c,
                beta,
                remainder,
                cutoff,
                ..
            } => {
                if !(*c >= 0.0) {
                    return Err(CoreError::config("stable constant C must be >= 0"));
                }
                if !(*beta > 0.0 && *beta < 2.0) {
                    return Err(CoreError::config(format!(
                        "stable exponent must lie in (0, 2), got {beta}"
                    )));
                }
                if *cutoff <= 0.0 {
                    return Err(CoreError::config("stable spec requires a positive cutoff"));
                }
                remainder.validate()
            }
        }
    }

    /// Pointwise density value (atoms have no density; returns an error).
    pub fn density_at(&self, y: f64) -> Result<f64> {
        match self {
            LevyDensitySpec::FiniteActivity { intensity, jump } => match jump {
                JumpDistribution::Density { pdf, .. } => Ok(intensity * pdf(y)),
                JumpDistribution::Atoms { .. } => Err(CoreError::config(
                    "atom-based jump distribution has no pointwise density",
                )),
            },
            LevyDensitySpec::InfiniteActivity {
                density, support, ..
            } => {
                if y < support.0 || y > support.1 {
                    Ok(0.0)
                } else {
                    Ok(density(y))
                }
            }
            LevyDensitySpec::StableTail {
                c, beta, remainder, ..
            } => {
                let stable = if y == 0.0 {
                    f64::INFINITY
                } else {
                    c / y.abs().powf(1.0 + beta)
                };
                Ok(stable + remainder.density_at(y)?)
            }
        }
    }

    /// Discrete `∫ (1 ∧ y²) ν(dy)` (quadrature / atom sum).
    pub fn one_wedge_y2_integral(&self) -> Result<f64> {
        match self {
            LevyDensitySpec::FiniteActivity { intensity, jump } => match jump {
                JumpDistribution::Density { pdf, support } => {
                    let f = |y: f64| (1.0f64).min(y * y) * pdf(y);
                    Ok(intensity * adaptive_simpson(&f, support.0, support.1, 1e-9))
                }
                JumpDistribution::Atoms { atoms } => {
                    let s: f64 = atoms
                        .iter()
                        .map(|(p, y)| {
                            let n2: f64 = y.iter().map(|v| v * v).sum();
                            p * n2.min(1.0)
                        })
                        .sum();
                    Ok(intensity * s)
                }
            },
            LevyDensitySpec::InfiniteActivity {
                density, support, ..
            } => {
                let f = |y: f64| (1.0f64).min(y * y) * density(y);
                // split at the origin; y² tames the singularity
                let lo = adaptive_simpson(&f, support.0, -1e-10, 1e-9);
                let hi = adaptive_simpson(&f, 1e-10, support.1, 1e-9);
                Ok(lo + hi)
            }
            LevyDensitySpec::StableTail {
                c, beta, remainder, ..
            } => {
                // ∫(1∧y²)·C/|y|^{1+β} dy = 2C·(1/(2−β) + 1/β)
                let stable = 2.0 * c * (1.0 / (2.0 - beta) + 1.0 / beta);
                Ok(stable + remainder.one_wedge_y2_integral()?)
            }
        }
    }

    /// Mass of `{|y| >= r}` by quadrature / atom summation.
    pub fn tail_mass(&self, r: f64) -> Result<f64> {
        if r <= 0.0 {
            return Err(CoreError::config("tail radius must be positive"));
        }
        match self {
            LevyDensitySpec::FiniteActivity { intensity, jump } => match jump {
                JumpDistribution::Density { pdf, support } => {
                    let mut mass = 0.0;
                    if support.0 < -r {
                        mass += adaptive_simpson(&|y| pdf(y), support.0, -r, 1e-10);
                    }
                    if support.1 > r {
                        mass += adaptive_simpson(&|y| pdf(y), r, support.1, 1e-10);
                    }
                    Ok(intensity * mass)
                }
                JumpDistribution::Atoms { atoms } => {
                    let s: f64 = atoms
                        .iter()
                        .filter(|(_, y)| {
                            let n2: f64 = y.iter().map(|v| v * v).sum();
                            n2.sqrt() >= r
                        })
                        .map(|(p, _)| p)
                        .sum();
                    Ok(intensity * s)
                }
            },
            LevyDensitySpec::InfiniteActivity {
                density, support, ..
            } => {
                let mut mass = 0.0;
                if support.0 < -r {
                    mass += adaptive_simpson(&|y| density(y), support.0, -r, 1e-10);
                }
                if support.1 > r {
                    mass += adaptive_simpson(&|y| density(y), r, support.1, 1e-10);
                }
                Ok(mass)
            }
            LevyDensitySpec::StableTail {
                c, beta, remainder, ..
            } => {
                let stable = 2.0 * c / (beta * r.powf(*beta));
                Ok(stable + remainder.tail_mass(r)?)
            }
        }
    }

    /// Mass strictly outside an interval `[lo, hi]` straddling the origin.
    pub fn mass_outside_interval(&self, lo: f64, hi: f64) -> Result<f64> {
        if lo >= 0.0 || hi <= 0.0 {
            return Err(CoreError::config(
                "interval must straddle the origin for an outside-mass query",
            ));
        }
        match self {
            LevyDensitySpec::FiniteActivity { intensity, jump } => match jump {
                JumpDistribution::Density { pdf, support } => {
                    let mut mass = 0.0;
                    if support.0 < lo {
                        mass += adaptive_simpson(&|y| pdf(y), support.0, lo, 1e-10);
                    }
                    if support.1 > hi {
                        mass += adaptive_simpson(&|y| pdf(y), hi, support.1, 1e-10);
                    }
                    Ok(intensity * mass)
                }
                JumpDistribution::Atoms { atoms } => {
                    let s: f64 = atoms
                        .iter()
                        .filter(|(_, y)| y[0] < lo || y[0] > hi)
                        .map(|(p, _)| p)
                        .sum();
                    Ok(intensity * s)
                }
            },
            LevyDensitySpec::InfiniteActivity {
                density, support, ..
            } => {
                let mut mass = 0.0;
                if support.0 < lo {
                    mass += adaptive_simpson(&|y| density(y), support.0, lo, 1e-10);
                }
                if support.1 > hi {
                    mass += adaptive_simpson(&|y| density(y), hi, support.1, 1e-10);
                }
                Ok(mass)
            }
            LevyDensitySpec::StableTail {
                c, beta, remainder, ..
            } => {
                let stable =
                    c / (beta * (-lo).powf(*beta)) + c / (beta * hi.powf(*beta));
                Ok(stable + remainder.mass_outside_interval(lo, hi)?)
            }
        }
    }

    /// Variance rate `∫_{|y| <= ε} y² ν(dy)` of the discarded small jumps.
    pub fn small_jump_variance(&self) -> Result<f64> {
        match self {
            LevyDensitySpec::FiniteActivity { .. } => Ok(0.0),
            LevyDensitySpec::InfiniteActivity {
                density, cutoff, ..
            } => {
                let f = |y: f64| y * y * density(y);
                let lo = adaptive_simpson(&f, -cutoff, -1e-12, 1e-10);
                let hi = adaptive_simpson(&f, 1e-12, *cutoff, 1e-10);
                Ok(lo + hi)
            }
            LevyDensitySpec::StableTail {
                c,
                beta,
                remainder,
                cutoff,
                ..
            } => {
                // ∫_{|y|<=ε} y²·C/|y|^{1+β} dy = 2C ε^{2−β}/(2−β)
                let stable = 2.0 * c * cutoff.powf(2.0 - beta) / (2.0 - beta);
                let rem = match remainder.as_ref() {
                    LevyDensitySpec::FiniteActivity { intensity, jump } => match jump {
                        JumpDistribution::Density { pdf, .. } => {
                            let f = |y: f64| y * y * pdf(y);
                            intensity * adaptive_simpson(&f, -cutoff, *cutoff, 1e-10)
                        }
                        JumpDistribution::Atoms { atoms } => {
                            intensity
                                * atoms
                                    .iter()
                                    .filter(|(_, y)| {
                                        y.iter().map(|v| v * v).sum::<f64>().sqrt() <= *cutoff
                                    })
                                    .map(|(p, y)| p * y.iter().map(|v| v * v).sum::<f64>())
                                    .sum::<f64>()
                        }
                    },
                    _ => 0.0,
                };
                Ok(stable + rem)
            }
        }
    }

    pub fn small_jump_mode(&self) -> Option<SmallJumpMode> {
        match self {
            LevyDensitySpec::FiniteActivity { .. } => None,
            LevyDensitySpec::InfiniteActivity { mode, .. } => Some(*mode),
            LevyDensitySpec::StableTail { mode, .. } => Some(*mode),
        }
    }

    /// Build the sampler of jumps with `|y| > cutoff` (all jumps for
    /// finite-activity specs).
    pub fn sampler(&self) -> Result<JumpSampler> {
        self.validate()?;
        match self {
            LevyDensitySpec::FiniteActivity { intensity, jump } => match jump {
                JumpDistribution::Density { pdf, support } => Ok(JumpSampler::tabulated(
                    |y| pdf(y),
                    *support,
                    0.0,
                    *intensity,
                )),
                JumpDistribution::Atoms { atoms } => {
                    let mut cdf = Vec::with_capacity(atoms.len());
                    let mut acc = 0.0;
                    for (p, _) in atoms {
                        acc += p;
                        cdf.push(acc);
                    }
                    Ok(JumpSampler {
                        intensity: *intensity,
                        kind: SamplerKind::Atoms {
                            atoms: atoms.clone(),
                            cdf,
                        },
                    })
                }
            },
            LevyDensitySpec::InfiniteActivity {
                density,
                support,
                cutoff,
                ..
            } => {
                let lam_lo = adaptive_simpson(&|y| density(y), support.0, -cutoff, 1e-9).max(0.0);
                let lam_hi = adaptive_simpson(&|y| density(y), *cutoff, support.1, 1e-9).max(0.0);
                Ok(JumpSampler::tabulated_truncated(
                    |y| density(y),
                    *support,
                    *cutoff,
                    lam_lo + lam_hi,
                ))
            }
            LevyDensitySpec::StableTail {
                c,
                beta,
                remainder,
                cutoff,
                ..
            } => {
                let rem_density = match remainder.as_ref() {
                    LevyDensitySpec::FiniteActivity {
                        intensity,
                        jump: JumpDistribution::Density { pdf, support },
                    } => Some((*intensity, pdf.clone(), *support)),
                    LevyDensitySpec::FiniteActivity {
                        jump: JumpDistribution::Atoms { .. },
                        ..
                    } => None,
                    _ => {
                        return Err(CoreError::config(
                            "stable remainder must be finite-activity",
                        ))
                    }
                };
                let (c, beta, cutoff_v) = (*c, *beta, *cutoff);
                let support = match &rem_density {
                    Some((_, _, s)) => (s.0.min(-20.0), s.1.max(20.0)),
                    None => (-20.0, 20.0),
                };
                let total_density = move |y: f64| {
                    let stable = if y == 0.0 {
                        0.0
                    } else {
                        c / y.abs().powf(1.0 + beta)
                    };
                    let rem = match &rem_density {
                        Some((lam, pdf, sup)) => {
                            if y >= sup.0 && y <= sup.1 {
                                lam * pdf(y)
                            } else {
                                0.0
                            }
                        }
                        None => 0.0,
                    };
                    stable + rem
                };
                let lam = {
                    let lo =
                        adaptive_simpson(&|y| total_density(y), support.0, -cutoff_v, 1e-8);
                    let hi = adaptive_simpson(&|y| total_density(y), cutoff_v, support.1, 1e-8);
                    (lo + hi).max(0.0)
                };
                if let LevyDensitySpec::FiniteActivity {
                    jump: JumpDistribution::Atoms { .. },
                    ..
                } = remainder.as_ref()
                {
                    return Err(CoreError::config(
                        "stable remainder with atoms is not supported by the sampler",
                    ));
                }
                Ok(JumpSampler::tabulated_truncated(
                    total_density,
                    support,
                    cutoff_v,
                    lam,
                ))
            }
        }
    }
}

enum SamplerKind {
    Atoms {
        atoms: Vec<(f64, Vec<f64>)>,
        cdf: Vec<f64>,
    },
    /// Inverse-CDF table over cells of the truncated support.
    Table {
        edges: Vec<f64>,
        cdf: Vec<f64>, // cumulative cell masses, last = total
    },
}

/// Samples jump marks with the truncated total intensity attached.
pub struct JumpSampler {
    pub intensity: f64,
    kind: SamplerKind,
}

impl JumpSampler {
    fn tabulated(
        density: impl Fn(f64) -> f64,
        support: (f64, f64),
        cutoff: f64,
        intensity: f64,
    ) -> Self {
        Self::build_table(density, support, cutoff, intensity)
    }

    fn tabulated_truncated(
        density: impl Fn(f64) -> f64,
        support: (f64, f64),
        cutoff: f64,
        intensity: f64,
    ) -> Self {
        Self::build_table(density, support, cutoff, intensity)
    }

    fn build_table(
        density: impl Fn(f64) -> f64,
        support: (f64, f64),
        cutoff: f64,
        intensity: f64,
    ) -> Self {
        const CELLS_PER_SIDE: usize = 4096;
        // cell edge pairs, flattened [a0, b0, a1, b1, ...]; the excluded band
        // (-cutoff, cutoff) never lies inside a cell
        let mut edges: Vec<f64> = Vec::new();
        let mut cdf: Vec<f64> = Vec::new();
        let mut acc = 0.0;
        let mut push_side = |lo: f64, hi: f64, edges: &mut Vec<f64>, cdf: &mut Vec<f64>| {
            if hi <= lo {
                return;
            }
            let dx = (hi - lo) / CELLS_PER_SIDE as f64;
            for i in 0..CELLS_PER_SIDE {
                let a = lo + dx * i as f64;
                let b = a + dx;
                acc += 0.5 * (density(a).max(0.0) + density(b).max(0.0)) * dx;
                edges.push(a);
                edges.push(b);
                cdf.push(acc);
            }
        };
        if cutoff > 0.0 {
            push_side(support.0, -cutoff, &mut edges, &mut cdf);
            push_side(cutoff, support.1, &mut edges, &mut cdf);
        } else {
            push_side(support.0, support.1, &mut edges, &mut cdf);
        }
        JumpSampler {
            intensity,
            kind: SamplerKind::Table { edges, cdf },
        }
    }

    /// Draw one mark (1-d table samplers return a single coordinate).
    pub fn sample(&self, rng: &mut PathRng, out: &mut Vec<f64>) {
        out.clear();
        match &self.kind {
            SamplerKind::Atoms { atoms, cdf } => {
                let i = rng.sample_cdf_index(cdf);
                out.extend_from_slice(&atoms[i].1);
            }
            SamplerKind::Table { edges, cdf } => {
                let i = rng.sample_cdf_index(cdf);
                let (a, b) = (edges[2 * i], edges[2 * i + 1]);
                out.push(a + (b - a) * rng.uniform());
            }
        }
    }
}
