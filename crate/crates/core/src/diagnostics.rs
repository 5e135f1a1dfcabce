//! Distributional distances, martingale checks, and the assumption audit.

use serde::{Deserialize, Serialize};

use crate::coeffs::{AssumptionAuditConfig, DensityField, ProjectedCoefficients};
use crate::ensemble::PathEnsemble;
use crate::error::{CoreError, Result};
use crate::model::{ItoModel, JumpSpec};

/// First four sample moments: mean, variance, skewness, excess kurtosis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

pub fn sample_moments(xs: &[f64]) -> Moments {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let sd = m2.sqrt();
    Moments {
        mean,
        variance: m2,
        skewness: if sd > 0.0 { m3 / (sd * sd * sd) } else { 0.0 },
        kurtosis: if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 },
    }
}

/// KS statistic of a sorted sample against a closed-form CDF.
pub fn ks_statistic_sorted(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let c = cdf(x);
        let lo = (c - i as f64 / n).abs();
        let hi = ((i as f64 + 1.0) / n - c).abs();
        sup = sup.max(lo).max(hi);
    }
    sup
}

/// Two-sample KS statistic. Symmetric in its arguments by construction.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut sup: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    sup
}

/// Wasserstein-1 distance between two samples via quantile matching.
///
/// For equal sizes this is the mean absolute difference of the sorted
/// samples; otherwise the larger sample's quantile function is evaluated at
/// the smaller one's plotting positions.
pub fn wasserstein1_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    if xs.len() == ys.len() {
        let n = xs.len() as f64;
        return xs
            .iter()
            .zip(ys.iter())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / n;
    }
    // symmetric quantile comparison at the union of plotting positions
    let quantile = |s: &[f64], u: f64| -> f64 {
        let pos = u * s.len() as f64 - 0.5;
        let i = pos.floor();
        let w = pos - i;
        let i0 = (i.max(0.0) as usize).min(s.len() - 1);
        let i1 = (i0 + 1).min(s.len() - 1);
        if pos < 0.0 {
            s[0]
        } else {
            s[i0] * (1.0 - w) + s[i1] * w
        }
    };
    let m = xs.len().max(ys.len());
    let mut acc = 0.0;
    for k in 0..m {
        let u = (k as f64 + 0.5) / m as f64;
        acc += (quantile(&xs, u) - quantile(&ys, u)).abs();
    }
    acc / m as f64
}

/// Quantile function of a gridded density by inverse cumulative trapezoid.
pub fn density_quantile(field: &DensityField, k: usize, u: f64) -> f64 {
    let cdf = field.cdf(k);
    let xs = &field.x_grid;
    let u = u.clamp(0.0, 1.0);
    match cdf.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
        Ok(i) => xs.node(i),
        Err(0) => xs.node(0),
        Err(i) if i >= cdf.len() => xs.node(cdf.len() - 1),
        Err(i) => {
            let (c0, c1) = (cdf[i - 1], cdf[i]);
            let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
            xs.node(i - 1) + w * xs.dx()
        }
    }
}

/// Reference marginal to compare a sample against.
pub enum MarginalRef<'a> {
    Sample(&'a [f64]),
    Density(&'a DensityField, usize),
    Cdf(&'a dyn Fn(f64) -> f64),
}

/// One comparison row of a mimicking report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MimicEntry {
    pub t: f64,
    pub label: String,
    pub ks: f64,
    pub w1: f64,
    pub moments_sample: Moments,
    pub moments_reference: Option<Moments>,
    pub n_sample: usize,
    pub n_reference: Option<usize>,
    /// Standard error of the sample mean.
    pub stderr_mean: f64,
}

/// Distributional distances between a sample and a reference at one time.
pub fn compare_marginals(
    sample: &[f64],
    reference: &MarginalRef<'_>,
    t: f64,
    label: &str,
) -> Result<MimicEntry> {
    if sample.len() < 100 {
        return Err(CoreError::config(
            "marginal comparison needs at least 100 points",
        ));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::numeric("sample contains non-finite values"));
    }
    let mut xs = sample.to_vec();
    xs.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    let moments_sample = sample_moments(&xs);
    let n = xs.len();
    let stderr_mean = (moments_sample.variance / n as f64).sqrt();

    let (ks, w1, moments_reference, n_reference) = match reference {
        MarginalRef::Sample(ref_sample) => {
            if ref_sample.len() < 100 {
                return Err(CoreError::config(
                    "marginal comparison needs at least 100 points",
                ));
            }
            if ref_sample.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::numeric(
                    "reference sample contains non-finite values",
                ));
            }
            let ks = ks_two_sample(&xs, ref_sample);
            let w1 = wasserstein1_two_sample(&xs, ref_sample);
            (
                ks,
                w1,
                Some(sample_moments(ref_sample)),
                Some(ref_sample.len()),
            )
        }
        MarginalRef::Density(field, k) => {
            let cdf = field.cdf(*k);
            let grid = &field.x_grid;
            let ks = ks_statistic_sorted(&xs, |x| {
                if x <= grid.lo {
                    0.0
                } else if x >= grid.hi {
                    1.0
                } else {
                    grid.interp(&cdf, x)
                }
            });
            let mut w1 = 0.0;
            for (i, &x) in xs.iter().enumerate() {
                let u = (i as f64 + 0.5) / n as f64;
                w1 += (x - density_quantile(field, *k, u)).abs();
            }
            w1 /= n as f64;
            // density moments by discrete integration
            let p = field.slice(*k);
            let dx = grid.dx();
            let mass: f64 = p.iter().sum::<f64>() * dx;
            let mean: f64 =
                p.iter().enumerate().map(|(i, &v)| grid.node(i) * v).sum::<f64>() * dx / mass;
            let mut c = [0.0; 3];
            for (i, &v) in p.iter().enumerate() {
                let d = grid.node(i) - mean;
                c[0] += d * d * v;
                c[1] += d * d * d * v;
                c[2] += d * d * d * d * v;
            }
            let var = c[0] * dx / mass;
            let sd = var.sqrt();
            let mom = Moments {
                mean,
                variance: var,
                skewness: if sd > 0.0 {
                    c[1] * dx / mass / (sd * sd * sd)
                } else {
                    0.0
                },
                kurtosis: if var > 0.0 {
                    c[2] * dx / mass / (var * var) - 3.0
                } else {
                    0.0
                },
            };
            (ks, w1, Some(mom), None)
        }
        MarginalRef::Cdf(cdf) => {
            let ks = ks_statistic_sorted(&xs, |x| cdf(x));
            (ks, f64::NAN, None, None)
        }
    };

    Ok(MimicEntry {
        t,
        label: label.to_string(),
        ks,
        w1,
        moments_sample,
        moments_reference,
        n_sample: n,
        n_reference,
        stderr_mean,
    })
}

/// Full mimicking report: one entry per (checkpoint, comparison).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MimicReport {
    pub version: u32,
    pub seed: u64,
    pub entries: Vec<MimicEntry>,
    pub tolerance_ks: f64,
    pub tolerance_route: f64,
    pub pass: bool,
}

/// Martingale preservation: per-checkpoint z-scores of the mean drift.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MartingaleCheck {
    pub t: f64,
    pub mean: f64,
    pub mean0: f64,
    pub stderr: f64,
    pub z_score: f64,
    pub pass: bool,
}

/// `|mean(X_t) − mean(X_0)| <= 3 stderr` at each checkpoint.
pub fn check_martingale_preservation(
    ensemble: &PathEnsemble,
    checkpoints: &[f64],
) -> Result<Vec<MartingaleCheck>> {
    let x0 = ensemble.marginal_at_step(0);
    let m0 = sample_moments(&x0);
    checkpoints
        .iter()
        .map(|&t| {
            let step = ensemble.step_nearest(t);
            let xs = ensemble.marginal_at_step(step);
            let m = sample_moments(&xs);
            if !m.mean.is_finite() || !m.variance.is_finite() {
                return Err(CoreError::numeric("non-finite moments at checkpoint"));
            }
            // stderr of the difference of means along the same paths
            let diffs: Vec<f64> = xs.iter().zip(x0.iter()).map(|(a, b)| a - b).collect();
            let md = sample_moments(&diffs);
            let stderr = (md.variance / diffs.len() as f64).sqrt().max(1e-300);
            let z = (m.mean - m0.mean) / stderr;
            Ok(MartingaleCheck {
                t: ensemble.grid.time(step),
                mean: m.mean,
                mean0: m0.mean,
                stderr,
                z_score: z,
                pass: z.abs() <= 3.0,
            })
        })
        .collect()
}

/// One audited condition with its measured quantities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditCheck {
    pub name: String,
    pub pass: bool,
    /// True when the check is a finite-sample surrogate, not a certification.
    pub heuristic: bool,
    pub measured: Vec<(String, f64)>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub version: u32,
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().filter(|c| !c.heuristic).all(|c| c.pass)
    }

    pub fn find(&self, name: &str) -> Option<&AuditCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// What the audit inspects: a source model with its ensemble, or a gridded
/// coefficient field.
pub enum AuditTarget<'a> {
    Model {
        model: &'a ItoModel,
        ensemble: Option<&'a PathEnsemble>,
    },
    Coefficients(&'a ProjectedCoefficients),
}

/// Audit the standing assumptions on a concrete object.
///
/// Reports empirical coefficient bounds, the jump integrability bound, tail
/// decay over the radii schedule, non-degeneracy (ellipticity floor or a
/// declared stable component), and a discrete continuity surrogate (labeled
/// heuristic). The audit always completes with a report.
pub fn audit_assumptions(
    target: &AuditTarget<'_>,
    config: &AssumptionAuditConfig,
) -> Result<AuditReport> {
    config.validate()?;
    let mut checks = Vec::new();
    match target {
        AuditTarget::Model { model, ensemble } => {
            // coefficient bounds: empirical sup over the recorded ensemble or
            // declared bounds when no ensemble is given
            let (sup_b, sup_d, source) = match ensemble {
                Some(ens) => {
                    let mut sup_b: f64 = 0.0;
                    let mut sup_d: f64 = 0.0;
                    if let Some(beta) = &ens.beta {
                        let d = ens.dim;
                        for chunk in beta.chunks(d) {
                            let n: f64 = chunk.iter().map(|v| v * v).sum::<f64>().sqrt();
                            sup_b = sup_b.max(n);
                        }
                        if let Some(dsq) = &ens.diff_sq {
                            for chunk in dsq.chunks(d * d) {
                                // Frobenius norm of δδᵀ is the squared norm of δ
                                let tr: f64 =
                                    (0..d).map(|r| chunk[r * d + r]).sum::<f64>();
                                sup_d = sup_d.max(tr.sqrt());
                            }
                        }
                    }
                    (sup_b, sup_d, "empirical")
                }
                None => (
                    model.bounds.sup_drift,
                    model.bounds.sup_diffusion,
                    "declared",
                ),
            };
            checks.push(AuditCheck {
                name: "coefficient_bounds".into(),
                pass: sup_b <= config.k1 && sup_d <= config.k1,
                heuristic: false,
                measured: vec![
                    ("sup_drift_norm".into(), sup_b),
                    ("sup_diffusion_norm".into(), sup_d),
                    ("bound_k1".into(), config.k1),
                ],
                detail: format!("{source} coefficient norms against the declared bound"),
            });

            // jump integrability + tail decay
            match &model.jumps {
                JumpSpec::PoissonDriven { levy, .. } => {
                    let int = levy.one_wedge_y2_integral()?;
                    checks.push(AuditCheck {
                        name: "jump_integrability".into(),
                        pass: int <= config.k2,
                        heuristic: false,
                        measured: vec![
                            ("one_wedge_y2".into(), int),
                            ("bound_k2".into(), config.k2),
                        ],
                        detail: "discrete (1 ∧ y²) integral of the jump measure".into(),
                    });
                    let mut measured = Vec::new();
                    let mut masses = Vec::new();
                    for &r in &config.tail_radii {
                        let m = levy.tail_mass(r)?;
                        measured.push((format!("tail_mass_r_{r}"), m));
                        masses.push(m);
                    }
                    let nonincreasing = masses.windows(2).all(|w| w[1] <= w[0] + 1e-12);
                    let decayed = match (masses.first(), masses.last()) {
                        (Some(&f), Some(&l)) => l <= 0.05 * f || l <= 1e-12,
                        _ => true,
                    };
                    checks.push(AuditCheck {
                        name: "jump_tail_decay".into(),
                        pass: nonincreasing && decayed,
                        heuristic: false,
                        measured,
                        detail: "tail masses over the radii schedule must decay \
                                 (nonincreasing, final <= 5% of first)"
                            .into(),
                    });
                }
                JumpSpec::CompensatorDirect { .. } | JumpSpec::None => {
                    checks.push(AuditCheck {
                        name: "jump_integrability".into(),
                        pass: true,
                        heuristic: false,
                        measured: vec![("one_wedge_y2".into(), 0.0)],
                        detail: "no closed-form jump measure to integrate".into(),
                    });
                }
            }

            // non-degeneracy: ellipticity floor on the recorded δδᵀ of the
            // projected coordinate, or a declared stable component
            let stable = matches!(
                &model.jumps,
                JumpSpec::PoissonDriven {
                    levy: crate::levy::LevyDensitySpec::StableTail { .. },
                    ..
                }
            );
            let min_a = match ensemble {
                Some(ens) => match &ens.diff_sq {
                    Some(dsq) => {
                        let d = ens.dim;
                        let pc = ens.proj_coord;
                        dsq.chunks(d * d)
                            .map(|c| c[pc * d + pc])
                            .fold(f64::INFINITY, f64::min)
                    }
                    None => f64::NAN,
                },
                None => f64::NAN,
            };
            let elliptic = min_a.is_finite() && min_a >= config.ellipticity_floor;
            checks.push(AuditCheck {
                name: "non_degeneracy".into(),
                pass: elliptic || stable,
                heuristic: false,
                measured: vec![
                    ("min_squared_diffusion".into(), min_a),
                    ("ellipticity_floor".into(), config.ellipticity_floor),
                    ("stable_component_declared".into(), if stable { 1.0 } else { 0.0 }),
                ],
                detail: if elliptic {
                    "squared diffusion stays above the ellipticity floor".into()
                } else if stable {
                    "degenerate diffusion backed by a declared stable jump component".into()
                } else {
                    "diffusion floor violated and no stable jump component declared".into()
                },
            });
        }
        AuditTarget::Coefficients(coeffs) => {
            let sup_b = coeffs.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let sup_s = coeffs.sigma.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            checks.push(AuditCheck {
                name: "coefficient_bounds".into(),
                pass: sup_b <= config.k1 && sup_s <= config.k1,
                heuristic: false,
                measured: vec![
                    ("sup_drift_norm".into(), sup_b),
                    ("sup_diffusion_norm".into(), sup_s),
                    ("bound_k1".into(), config.k1),
                ],
                detail: "gridded coefficient norms against the declared bound".into(),
            });
            let (mut max_int, mut max_tail) = (0.0f64, 0.0f64);
            if let Some(kernel) = &coeffs.kernel {
                let nz = coeffs.z_grid.n;
                for k in 0..coeffs.n_slices() {
                    for i in 0..nz {
                        let mut int = kernel.tail[k * nz + i];
                        for j in 0..kernel.y_grid.n {
                            let y = kernel.y_grid.node(j);
                            int += (1.0f64).min(y * y)
                                * kernel.density(k, j, i, nz)
                                * kernel.y_grid.weight(j);
                        }
                        max_int = max_int.max(int);
                        max_tail = max_tail.max(kernel.tail[k * nz + i]);
                    }
                }
            }
            checks.push(AuditCheck {
                name: "jump_integrability".into(),
                pass: max_int <= config.k2,
                heuristic: false,
                measured: vec![
                    ("max_one_wedge_y2".into(), max_int),
                    ("max_tail_mass".into(), max_tail),
                    ("bound_k2".into(), config.k2),
                ],
                detail: "kernel (1 ∧ y²) integral maximized over (t, z)".into(),
            });
            let min_a = coeffs.a.iter().cloned().fold(f64::INFINITY, f64::min);
            checks.push(AuditCheck {
                name: "non_degeneracy".into(),
                pass: min_a >= config.ellipticity_floor,
                heuristic: false,
                measured: vec![
                    ("min_squared_diffusion".into(), min_a),
                    ("ellipticity_floor".into(), config.ellipticity_floor),
                ],
                detail: "gridded squared diffusion against the ellipticity floor".into(),
            });
            // discrete Lipschitz surrogate for continuity in z
            let nz = coeffs.z_grid.n;
            let dz = coeffs.z_grid.dx();
            let mut lip_b = 0.0f64;
            let mut lip_a = 0.0f64;
            for k in 0..coeffs.n_slices() {
                for i in 0..nz - 1 {
                    lip_b = lip_b
                        .max((coeffs.b[coeffs.idx(k, i + 1)] - coeffs.b[coeffs.idx(k, i)]).abs() / dz);
                    lip_a = lip_a
                        .max((coeffs.a[coeffs.idx(k, i + 1)] - coeffs.a[coeffs.idx(k, i)]).abs() / dz);
                }
            }
            checks.push(AuditCheck {
                name: "coefficient_continuity".into(),
                pass: lip_b.is_finite() && lip_a.is_finite(),
                heuristic: true,
                measured: vec![
                    ("lipschitz_drift".into(), lip_b),
                    ("lipschitz_squared_diffusion".into(), lip_a),
                ],
                detail: "finite-difference Lipschitz surrogate; continuity cannot be \
                         certified from finitely many samples"
                    .into(),
            });
        }
    }
    Ok(AuditReport {
        version: 1,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{TimeGrid, UniformGrid};
    use crate::model::InitialLaw;
    use crate::quad::normal_cdf;
    use crate::rng::PathRng;
    use approx::assert_relative_eq;

    #[test]
    fn identical_samples_have_zero_distances() {
        let xs: Vec<f64> = (0..500).map(|i| (i as f64 * 0.737).sin()).collect();
        assert_eq!(ks_two_sample(&xs, &xs), 0.0);
        assert_eq!(wasserstein1_two_sample(&xs, &xs), 0.0);
    }

    #[test]
    fn ks_and_w1_symmetric_under_swap() {
        let mut rng = PathRng::new(5, 0);
        let a: Vec<f64> = (0..1000).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..700).map(|_| rng.normal() * 1.3 + 0.2).collect();
        assert_eq!(ks_two_sample(&a, &b), ks_two_sample(&b, &a));
        assert_eq!(
            wasserstein1_two_sample(&a, &b),
            wasserstein1_two_sample(&b, &a)
        );
    }

    #[test]
    fn w1_of_shift_is_the_shift() {
        // dyadic data and shift: the sorted-difference identity is exact
        let xs: Vec<f64> = (0..256).map(|i| i as f64 * 0.25).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x + 0.5).collect();
        assert_eq!(wasserstein1_two_sample(&xs, &ys), 0.5);
        // generic float data to rounding accuracy
        let mut rng = PathRng::new(8, 1);
        let xs: Vec<f64> = (0..2000).map(|_| rng.normal()).collect();
        let c = 0.3;
        let ys: Vec<f64> = xs.iter().map(|x| x + c).collect();
        assert_relative_eq!(wasserstein1_two_sample(&xs, &ys), c, max_relative = 1e-12);
    }

    #[test]
    fn w1_between_shifted_normals() {
        let mut rng = PathRng::new(21, 0);
        let n = 1_000_000;
        let a: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.normal() + 0.1).collect();
        let w1 = wasserstein1_two_sample(&a, &b);
        assert!((0.095..=0.105).contains(&w1), "w1 = {w1}");
    }

    #[test]
    fn ks_sorted_against_normal_cdf() {
        let mut rng = PathRng::new(33, 0);
        let mut xs: Vec<f64> = (0..100_000).map(|_| rng.normal()).collect();
        xs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let ks = ks_statistic_sorted(&xs, normal_cdf);
        assert!(ks <= 0.01, "ks = {ks}");
    }

    #[test]
    fn compare_marginals_against_density_field() {
        // sample from N(0,1) against the same density on a grid
        let mut rng = PathRng::new(3, 7);
        let xs: Vec<f64> = (0..50_000).map(|_| rng.normal()).collect();
        let grid = UniformGrid::new(-8.0, 8.0, 1601).unwrap();
        let field =
            DensityField::from_density(grid, 1.0, crate::quad::normal_pdf).unwrap();
        let e = compare_marginals(&xs, &MarginalRef::Density(&field, 0), 1.0, "pide").unwrap();
        assert!(e.ks < 0.01, "ks = {}", e.ks);
        assert!(e.w1 < 0.01, "w1 = {}", e.w1);
        let mref = e.moments_reference.unwrap();
        assert_relative_eq!(mref.variance, 1.0, max_relative = 1e-3);
    }

    #[test]
    fn compare_marginals_rejects_nan_and_small_samples() {
        let xs = vec![0.0; 50];
        assert!(compare_marginals(&xs, &MarginalRef::Cdf(&normal_cdf), 0.0, "x").is_err());
        let mut ys = vec![0.0; 200];
        ys[3] = f64::NAN;
        assert!(compare_marginals(&ys, &MarginalRef::Cdf(&normal_cdf), 0.0, "x").is_err());
    }

    #[test]
    fn martingale_check_flags_drift() {
        use crate::model::ItoModel;
        use crate::simulate::simulate_ito;
        let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
        // driftless Brownian passes
        let bm = ItoModel::scalar(InitialLaw::Point(vec![0.0]), |_, _| 0.0, |_, _| 1.0);
        let ens = simulate_ito(&bm, &grid, 20_000, 9).unwrap();
        let checks = check_martingale_preservation(&ens, &[0.5, 1.0]).unwrap();
        assert!(checks.iter().all(|c| c.pass), "{checks:?}");
        // β = 0.5 fails loudly by t = 1
        let drifty = ItoModel::scalar(InitialLaw::Point(vec![0.0]), |_, _| 0.5, |_, _| 1.0);
        let ens = simulate_ito(&drifty, &grid, 100_000, 9).unwrap();
        let checks = check_martingale_preservation(&ens, &[1.0]).unwrap();
        assert!(!checks[0].pass);
        assert!(checks[0].z_score > 10.0, "z = {}", checks[0].z_score);
    }

    #[test]
    fn audit_constant_elliptic_model_passes() {
        use crate::model::ItoModel;
        use crate::simulate::simulate_ito;
        let grid = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let model = ItoModel::scalar(InitialLaw::Point(vec![0.0]), |_, _| 0.3, |_, _| 0.5)
            .with_bounds(1.0, 1.0);
        let ens = simulate_ito(&model, &grid, 2000, 4).unwrap();
        let cfg = AssumptionAuditConfig {
            k1: 1.0,
            k2: 10.0,
            k3: 10.0,
            ellipticity_floor: 0.01,
            stable_beta: None,
            tail_radii: vec![1.0, 2.0, 4.0],
        };
        let report = audit_assumptions(
            &AuditTarget::Model {
                model: &model,
                ensemble: Some(&ens),
            },
            &cfg,
        )
        .unwrap();
        assert!(report.all_pass(), "{report:?}");
    }

    #[test]
    fn audit_degenerate_without_stable_fails_non_degeneracy() {
        use crate::levy::{JumpDistribution, LevyDensitySpec};
        use crate::model::{ItoModel, JumpSpec};
        use crate::simulate::simulate_ito;
        let grid = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let levy = LevyDensitySpec::FiniteActivity {
            intensity: 1.0,
            jump: JumpDistribution::Atoms {
                atoms: vec![(1.0, vec![1.0])],
            },
        };
        let model = ItoModel::scalar(InitialLaw::Point(vec![0.0]), |_, _| 0.0, |_, _| 0.0)
            .with_jumps(JumpSpec::PoissonDriven {
                levy,
                amplitude: None,
                amplitude_state_free: true,
            });
        let ens = simulate_ito(&model, &grid, 500, 4).unwrap();
        let report = audit_assumptions(
            &AuditTarget::Model {
                model: &model,
                ensemble: Some(&ens),
            },
            &AssumptionAuditConfig::default(),
        )
        .unwrap();
        let nd = report.find("non_degeneracy").unwrap();
        assert!(!nd.pass);
        assert!(report.find("jump_tail_decay").is_some());
    }

    #[test]
    fn audit_tail_schedule_matches_exponential() {
        use crate::levy::{JumpDistribution, LevyDensitySpec};
        use crate::model::{ItoModel, JumpSpec};
        use std::sync::Arc;
        let levy = LevyDensitySpec::FiniteActivity {
            intensity: 1.0,
            jump: JumpDistribution::Density {
                pdf: Arc::new(|y: f64| 0.5 * (-y.abs()).exp()),
                support: (-40.0, 40.0),
            },
        };
        let model = ItoModel::scalar(InitialLaw::Point(vec![0.0]), |_, _| 0.0, |_, _| 1.0)
            .with_jumps(JumpSpec::PoissonDriven {
                levy,
                amplitude: None,
                amplitude_state_free: true,
            });
        let cfg = AssumptionAuditConfig {
            tail_radii: vec![1.0, 2.0, 4.0, 8.0],
            ..Default::default()
        };
        let report = audit_assumptions(
            &AuditTarget::Model {
                model: &model,
                ensemble: None,
            },
            &cfg,
        )
        .unwrap();
        let tails = report.find("jump_tail_decay").unwrap();
        for (key, v) in &tails.measured {
            let r: f64 = key.trim_start_matches("tail_mass_r_").parse().unwrap();
            assert_relative_eq!(*v, (-r).exp(), epsilon = 1e-8);
        }
    }

    #[test]
    fn audit_determinism() {
        let z = UniformGrid::new(-2.0, 2.0, 21).unwrap();
        let coeffs = crate::coeffs::ProjectedCoefficients::from_fields(
            vec![0.0, 0.5],
            z,
            |_, zv| -zv,
            |_, zv| 1.0 + 0.1 * zv.tanh(),
        )
        .unwrap();
        let cfg = AssumptionAuditConfig::default();
        let a = audit_assumptions(&AuditTarget::Coefficients(&coeffs), &cfg).unwrap();
        let b = audit_assumptions(&AuditTarget::Coefficients(&coeffs), &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
