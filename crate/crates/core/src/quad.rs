//! Quadrature, root finding, and normal-distribution helpers shared by the
//! numerical modules.

use crate::error::{CoreError, Result};

/// Adaptive Simpson quadrature on `[a, b]`.
///
/// Refines until the local Richardson estimate is below
/// `tol * |local integral|`, with an absolute floor tied to the root-level
/// magnitude so integrands with a numerical noise floor (root finding,
/// interpolation) cannot force unbounded refinement, and a depth cap.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let scale = (b - a).abs() / 6.0 * (fa.abs() + 4.0 * fm.abs() + fb.abs());
    let floor = 1e-13 * whole.abs().max(scale) + 1e-300;
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, floor, 24)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    floor: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= (15.0 * tol * whole.abs()).max(floor) {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, floor, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, floor, depth - 1)
}

/// Nested adaptive quadrature over an axis-aligned rectangle.
pub fn adaptive_simpson_2d(
    f: &dyn Fn(f64, f64) -> f64,
    ax: (f64, f64),
    ay: (f64, f64),
    tol: f64,
) -> f64 {
    let inner_tol = tol * 0.1;
    adaptive_simpson(
        &|x| adaptive_simpson(&|y| f(x, y), ay.0, ay.1, inner_tol),
        ax.0,
        ax.1,
        tol,
    )
}

/// Trapezoid rule over tabulated values on a uniform grid with spacing `dx`.
pub fn trapezoid_uniform(values: &[f64], dx: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let interior: f64 = values[1..values.len() - 1].iter().sum();
    dx * (0.5 * values[0] + interior + 0.5 * values[values.len() - 1])
}

/// Bracketed root finding: bisection with a secant candidate that is only
/// accepted when it keeps shrinking the bracket geometrically.
///
/// Requires `f(a)` and `f(b)` of opposite sign; converges to an interval of
/// width `tol`.
pub fn find_root(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() {
        return Err(CoreError::numeric("root finder: NaN at bracket endpoint"));
    }
    if fa * fb > 0.0 {
        return Err(CoreError::numeric(format!(
            "root finder: no sign change on [{a}, {b}] (f = {fa}, {fb})"
        )));
    }
    let mut use_secant = true;
    for _ in 0..200 {
        let width = (b - a).abs();
        if width < tol {
            return Ok(0.5 * (a + b));
        }
        let mid = 0.5 * (a + b);
        let mut x = mid;
        if use_secant {
            let s = b - fb * (b - a) / (fb - fa);
            // accept only if it stays well inside the bracket
            if s.is_finite() && (s - mid).abs() <= 0.4 * width {
                x = s;
            }
        }
        // alternate so the bracket halves at least every other step
        use_secant = !use_secant;
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fa * fx < 0.0 {
            b = x;
            fb = fx;
        } else {
            a = x;
            fa = fx;
        }
    }
    Ok(0.5 * (a + b))
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF via `erf`.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simpson_matches_closed_forms() {
        let i = adaptive_simpson(&|x| x * x, 0.0, 1.0, 1e-12);
        assert_relative_eq!(i, 1.0 / 3.0, epsilon = 1e-12);
        let j = adaptive_simpson(&|x| (-x).exp(), 0.0, 30.0, 1e-10);
        assert_relative_eq!(j, 1.0, epsilon = 1e-9);
        let k = adaptive_simpson(&|x| x.sin(), 0.0, std::f64::consts::PI, 1e-10);
        assert_relative_eq!(k, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn simpson_2d_gaussian_mass() {
        let f = |x: f64, y: f64| normal_pdf(x) * normal_pdf(y);
        let m = adaptive_simpson_2d(&f, (-8.0, 8.0), (-8.0, 8.0), 1e-8);
        assert_relative_eq!(m, 1.0, epsilon = 1e-7);
    }

    #[test]
    fn root_finder_hits_tolerance() {
        let r = find_root(&|x| x * x * x - 2.0, 0.0, 2.0, 1e-12).unwrap();
        assert_relative_eq!(r, 2f64.powf(1.0 / 3.0), epsilon = 1e-10);
        assert!(find_root(&|x| x * x + 1.0, -1.0, 1.0, 1e-10).is_err());
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert_relative_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(normal_cdf(1.959963984540054), 0.975, epsilon = 1e-9);
        assert_relative_eq!(
            normal_cdf(-8.0),
            6.22096057427178e-16,
            max_relative = 1e-9
        );
    }

    #[test]
    fn trapezoid_linear_exact() {
        let xs: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let vals: Vec<f64> = xs.iter().map(|x| 3.0 * x).collect();
        assert_relative_eq!(trapezoid_uniform(&vals, 0.1), 1.5, epsilon = 1e-12);
    }
}
