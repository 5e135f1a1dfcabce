//! Pushforward of a Lévy measure under a jump-amplitude map: the compensator
//! of the state-increment measure.
//!
//! For a differentiable monotone amplitude `ψ` the pushforward has density
//! `m(y) = 1_{y ∈ ψ(ℝ)} |ψ'(ψ⁻¹(y))|⁻¹ ν(ψ⁻¹(y))`; for a measurable set the
//! mass is `ν(ψ⁻¹(A))`. Both routes are implemented independently so one can
//! validate the other.

use crate::error::{CoreError, Result};
use crate::levy::LevyDensitySpec;
use crate::quad::find_root;
use crate::rng::PathRng;

/// A scalar amplitude with its working domain and optional analytic helpers.
pub struct Amplitude<'a> {
    pub psi: &'a dyn Fn(f64) -> f64,
    /// Domain of marks over which ψ is inspected and inverted.
    pub domain: (f64, f64),
    /// Closed-form inverse, when available.
    pub inverse: Option<&'a dyn Fn(f64) -> f64>,
    /// Closed-form derivative, when available.
    pub derivative: Option<&'a dyn Fn(f64) -> f64>,
}

impl<'a> Amplitude<'a> {
    pub fn new(psi: &'a dyn Fn(f64) -> f64, domain: (f64, f64)) -> Self {
        Amplitude {
            psi,
            domain,
            inverse: None,
            derivative: None,
        }
    }

    pub fn with_inverse(mut self, inverse: &'a dyn Fn(f64) -> f64) -> Self {
        self.inverse = Some(inverse);
        self
    }

    pub fn with_derivative(mut self, derivative: &'a dyn Fn(f64) -> f64) -> Self {
        self.derivative = Some(derivative);
        self
    }

    /// Central finite-difference derivative with step `1e-6 * (1 + |z|)`.
    fn d_psi(&self, z: f64) -> f64 {
        match self.derivative {
            Some(d) => d(z),
            None => {
                let h = 1e-6 * (1.0 + z.abs());
                ((self.psi)(z + h) - (self.psi)(z - h)) / (2.0 * h)
            }
        }
    }

    /// Sampled-derivative monotonicity check over the working domain.
    pub fn check_monotone(&self, samples: usize) -> Result<f64> {
        let (lo, hi) = self.domain;
        let mut sign = 0.0f64;
        for i in 0..=samples {
            let z = lo + (hi - lo) * i as f64 / samples as f64;
            let d = self.d_psi(z);
            if !d.is_finite() {
                return Err(CoreError::numeric(format!(
                    "amplitude derivative not finite at z = {z}"
                )));
            }
            if d == 0.0 {
                continue;
            }
            if sign == 0.0 {
                sign = d.signum();
            } else if d.signum() != sign {
                return Err(CoreError::numeric(format!(
                    "amplitude is not monotone on [{lo}, {hi}]: derivative changes sign near z = {z}"
                )));
            }
        }
        if sign == 0.0 {
            return Err(CoreError::numeric("amplitude is constant on the domain"));
        }
        Ok(sign)
    }

    /// Image interval, from the sampled extremes of ψ at the domain ends.
    pub fn image(&self) -> (f64, f64) {
        let a = (self.psi)(self.domain.0);
        let b = (self.psi)(self.domain.1);
        (a.min(b), a.max(b))
    }

    /// ψ⁻¹(y) by the closed form or bracketed root finding to 1e-10.
    pub fn invert(&self, y: f64) -> Result<f64> {
        if let Some(inv) = self.inverse {
            return Ok(inv(y));
        }
        let f = |z: f64| (self.psi)(z) - y;
        find_root(&f, self.domain.0, self.domain.1, 1e-10)
    }
}

/// Density of the pushforward measure at a point `y != 0`.
///
/// Returns 0 when `y` lies outside the image of the working domain (not an
/// error: the indicator in the change-of-variables formula).
pub fn pushforward_density(amp: &Amplitude<'_>, nu: &LevyDensitySpec, y: f64) -> Result<f64> {
    if y == 0.0 {
        return Err(CoreError::config("pushforward density is undefined at 0"));
    }
    amp.check_monotone(64)?;
    let (img_lo, img_hi) = amp.image();
    if y < img_lo || y > img_hi {
        return Ok(0.0);
    }
    let z = amp.invert(y)?;
    let jac = amp.d_psi(z).abs();
    if jac == 0.0 || !jac.is_finite() {
        return Err(CoreError::numeric(format!(
            "amplitude Jacobian degenerate at z = {z}"
        )));
    }
    Ok(nu.density_at(z)? / jac)
}

/// Monte Carlo estimate of `ν(ψ⁻¹(A))` for an interval `A = [a, b]` bounded
/// away from 0, with its standard error.
///
/// Marks are drawn uniformly over the working domain and weighted by the
/// Lévy density, so the estimate is independent of the density route.
pub fn pushforward_set_mass(
    amp: &Amplitude<'_>,
    nu: &LevyDensitySpec,
    set: (f64, f64),
    n_mc: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let (a, b) = set;
    if b <= a {
        return Err(CoreError::config("set must be a nonempty interval"));
    }
    if a <= 0.0 && b >= 0.0 {
        let infinite = !matches!(nu, LevyDensitySpec::FiniteActivity { .. });
        if infinite {
            return Err(CoreError::config(
                "set touching the origin may carry infinite mass for this measure",
            ));
        }
    }
    if n_mc == 0 {
        return Err(CoreError::config("n_mc must be positive"));
    }
    let mut rng = PathRng::new(seed, 0);
    let (lo, hi) = amp.domain;
    let span = hi - lo;
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..n_mc {
        let z = lo + span * rng.uniform();
        let v = (amp.psi)(z);
        let w = if v >= a && v <= b {
            nu.density_at(z)? * span
        } else {
            0.0
        };
        sum += w;
        sum2 += w * w;
    }
    let mean = sum / n_mc as f64;
    let var = (sum2 / n_mc as f64 - mean * mean).max(0.0);
    Ok((mean, (var / n_mc as f64).sqrt()))
}

/// Discrete check of the change-of-variables identity:
/// `∫ (1 ∧ y²) m(y) dy` computed through the pushforward density equals
/// `∫ (1 ∧ ψ(z)²) ν(z) dz` computed in mark space.
pub fn integrability_preserved(
    amp: &Amplitude<'_>,
    nu: &LevyDensitySpec,
    tol: f64,
) -> Result<(f64, f64)> {
    let (img_lo, img_hi) = amp.image();
    // image side, avoiding the origin singularity of the weight's kink
    let f_img = |y: f64| {
        if y == 0.0 {
            return 0.0;
        }
        let m = pushforward_density(amp, nu, y).unwrap_or(0.0);
        (1.0f64).min(y * y) * m
    };
    let lhs = crate::quad::adaptive_simpson(&f_img, img_lo, -1e-9, tol)
        + crate::quad::adaptive_simpson(&f_img, 1e-9, img_hi, tol);
    let f_mark = |z: f64| {
        let v = (amp.psi)(z);
        (1.0f64).min(v * v) * nu.density_at(z).unwrap_or(0.0)
    };
    let rhs = crate::quad::adaptive_simpson(&f_mark, amp.domain.0, amp.domain.1, tol);
    Ok((lhs, rhs))
}

/// Tabulate the pushforward density on a y grid as a (state-independent)
/// jump kernel, ready for the CSV kernel format or the generator builder.
///
/// The mass beyond the grid is integrated into the kernel's tail field.
pub fn tabulate_pushforward(
    amp: &Amplitude<'_>,
    nu: &LevyDensitySpec,
    y_grid: &crate::grid::UniformGrid,
    n_states: usize,
) -> Result<crate::coeffs::JumpKernelGrid> {
    let ny = y_grid.n;
    let mut row = vec![0.0; ny];
    for (j, v) in row.iter_mut().enumerate() {
        let y = y_grid.node(j);
        *v = if y == 0.0 {
            0.0
        } else {
            pushforward_density(amp, nu, y)?
        };
    }
    let (img_lo, img_hi) = amp.image();
    let mut tail = 0.0;
    if img_lo < y_grid.lo {
        tail += crate::quad::adaptive_simpson(
            &|y| pushforward_density(amp, nu, y).unwrap_or(0.0),
            img_lo,
            y_grid.lo,
            1e-9,
        );
    }
    if img_hi > y_grid.hi {
        tail += crate::quad::adaptive_simpson(
            &|y| pushforward_density(amp, nu, y).unwrap_or(0.0),
            y_grid.hi,
            img_hi,
            1e-9,
        );
    }
    let mut n = vec![0.0; ny * n_states];
    for j in 0..ny {
        for i in 0..n_states {
            n[j * n_states + i] = row[j];
        }
    }
    Ok(crate::coeffs::JumpKernelGrid {
        y_grid: y_grid.clone(),
        n,
        tail: vec![tail.max(0.0); n_states],
    })
}
