//! Cross-module invariants: pushforward route consistency, serialization
//! round-trips, martingale preservation under the truncation convention,
//! and the weak order of the Euler scheme.

use std::sync::Arc;

use proptest::prelude::*;

use mproj_core::compensator::{pushforward_density, pushforward_set_mass, Amplitude};
use mproj_core::diagnostics::sample_moments;
use mproj_core::grid::{TimeGrid, UniformGrid};
use mproj_core::levy::{JumpDistribution, LevyDensitySpec};
use mproj_core::model::{InitialLaw, ItoModel, JumpSpec};
use mproj_core::simulate::simulate_ito;
use mproj_core::ProjectedCoefficients;

fn double_exp() -> LevyDensitySpec {
    LevyDensitySpec::FiniteActivity {
        intensity: 1.0,
        jump: JumpDistribution::Density {
            pdf: Arc::new(|y: f64| 0.5 * (-y.abs()).exp()),
            support: (-60.0, 60.0),
        },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Density and set-mass routes agree on random sets for random monotone
    /// cubic amplitudes, and the density stays nonnegative.
    #[test]
    fn pushforward_routes_agree(
        a in 0.05f64..0.8,
        b in 0.1f64..1.5,
        lo_raw in 0.3f64..2.5,
        width in 0.2f64..2.0,
        negate in proptest::bool::ANY,
        seed in 0u64..1_000_000,
    ) {
        let nu = double_exp();
        let psi = move |y: f64| a * y * y * y + b * y;
        let amp = Amplitude::new(&psi, (-6.0, 6.0));
        let (lo, hi) = if negate {
            (-(lo_raw + width), -lo_raw)
        } else {
            (lo_raw, lo_raw + width)
        };
        let int = mproj_core::quad::adaptive_simpson(
            &|y| pushforward_density(&amp, &nu, y).unwrap(),
            lo,
            hi,
            1e-9,
        );
        for i in 0..=20 {
            let y = lo + (hi - lo) * i as f64 / 20.0;
            prop_assert!(pushforward_density(&amp, &nu, y).unwrap() >= 0.0);
        }
        let (mass, se) = pushforward_set_mass(&amp, &nu, (lo, hi), 200_000, seed).unwrap();
        prop_assert!(
            (int - mass).abs() <= 3.0 * se + 1e-6,
            "interval [{lo}, {hi}]: {int} vs {mass} (se {se})"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Coefficient CSV round-trips reproduce every value bit for bit.
    #[test]
    fn coefficients_csv_roundtrip(
        b0 in -2.0f64..2.0,
        b1 in -1.0f64..1.0,
        a0 in 0.01f64..2.0,
        a1 in 0.0f64..0.4,
        nk in 1usize..5,
        nz in 3usize..20,
    ) {
        prop_assume!(a0 > a1);
        let z = UniformGrid::new(-2.0, 2.0, nz).unwrap();
        let times: Vec<f64> = (0..nk).map(|k| 0.25 * k as f64).collect();
        let coeffs = ProjectedCoefficients::from_fields(
            times,
            z,
            |t, zv| b0 + b1 * zv + 0.01 * t,
            |t, zv| a0 + a1 * (zv + t).sin(),
        )
        .unwrap();
        let dir = std::env::temp_dir().join("mproj-prop-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("coeffs-{nk}-{nz}.csv"));
        mproj_core::io::write_coefficients_csv(&coeffs, &path).unwrap();
        let back = mproj_core::io::read_coefficients_csv(&path, None).unwrap();
        prop_assert_eq!(coeffs.times, back.times);
        prop_assert_eq!(coeffs.b, back.b);
        prop_assert_eq!(coeffs.a, back.a);
        prop_assert_eq!(coeffs.sigma, back.sigma);
    }

    /// Ensemble dumps round-trip exactly, including jump marks.
    #[test]
    fn ensemble_dump_roundtrip(seed in 0u64..100_000, intensity in 0.0f64..3.0) {
        let levy = LevyDensitySpec::FiniteActivity {
            intensity,
            jump: JumpDistribution::Atoms {
                atoms: vec![(0.4, vec![0.6]), (0.6, vec![-0.4])],
            },
        };
        let model = ItoModel::scalar(InitialLaw::Point(vec![0.1]), |_, _| 0.05, |_, _| 0.3)
            .with_jumps(JumpSpec::PoissonDriven {
                levy,
                amplitude: None,
                amplitude_state_free: true,
            });
        let grid = TimeGrid::new(0.0, 0.5, 10).unwrap();
        let ens = simulate_ito(&model, &grid, 50, seed).unwrap();
        let dir = std::env::temp_dir().join("mproj-prop-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("ens-{seed}.bin"));
        mproj_core::io::write_ensemble_dump(&ens, &path).unwrap();
        let back = mproj_core::io::read_ensemble_dump(&path).unwrap();
        prop_assert_eq!(ens.values, back.values);
        prop_assert_eq!(ens.beta, back.beta);
        prop_assert_eq!(ens.diff_sq, back.diff_sq);
        prop_assert_eq!(ens.jump_marks, back.jump_marks);
    }
}

/// Martingale preservation under the truncation convention: one-sided unit
/// jumps at rate λ are uncompensated, so β = −λ restores the martingale.
#[test]
fn one_sided_jumps_with_compensating_drift_are_martingale() {
    let lambda = 1.5;
    let levy = LevyDensitySpec::FiniteActivity {
        intensity: lambda,
        jump: JumpDistribution::Atoms {
            atoms: vec![(1.0, vec![1.0])],
        },
    };
    let model = ItoModel::scalar(InitialLaw::Point(vec![0.0]), move |_, _| -lambda, |_, _| 0.0)
        .with_jumps(JumpSpec::PoissonDriven {
            levy,
            amplitude: None,
            amplitude_state_free: true,
        });
    let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
    let n = 100_000;
    let ens = simulate_ito(&model, &grid, n, 303).unwrap();
    for step in [25, 50, 100] {
        let xs = ens.marginal_at_step(step);
        let m = sample_moments(&xs);
        let se = (m.variance / n as f64).sqrt();
        assert!(
            m.mean.abs() <= 3.0 * se,
            "step {step}: mean {} exceeds 3 se {se}",
            m.mean
        );
    }
}

/// Weak order of the Euler scheme on a mean-reverting diffusion.
///
/// The scheme's discrete second moment obeys the exact recursion
/// `v' = (1 − Δt)² v + Δt`, so the Monte Carlo estimate must match the
/// recursion to sampling accuracy, and the recursion's bias against the
/// continuous-time value must halve when Δt halves.
#[test]
fn weak_euler_order_on_ou() {
    let t_end = 1.0;
    let truth = (1.0 - (-2.0f64 * t_end).exp()) / 2.0;
    let n_paths = 400_000;
    let mut biases = Vec::new();
    for (n_steps, seed) in [(20usize, 71u64), (40, 72)] {
        let dt = t_end / n_steps as f64;
        let mut v_exact = 0.0f64;
        for _ in 0..n_steps {
            v_exact = (1.0 - dt) * (1.0 - dt) * v_exact + dt;
        }
        let model = ItoModel::scalar(InitialLaw::Point(vec![0.0]), |_, s| -s.x[0], |_, _| 1.0);
        let grid = TimeGrid::new(0.0, t_end, n_steps).unwrap();
        let ens = simulate_ito(&model, &grid, n_paths, seed).unwrap();
        let xs = ens.marginal_at_step(n_steps);
        let m2 = xs.iter().map(|x| x * x).sum::<f64>() / n_paths as f64;
        // sd(X²) for near-Gaussian X is about √2 v
        let se = (2.0f64).sqrt() * v_exact / (n_paths as f64).sqrt();
        assert!(
            (m2 - v_exact).abs() <= 4.0 * se,
            "n_steps {n_steps}: simulated second moment {m2} vs exact {v_exact} (se {se})"
        );
        biases.push((m2 - truth).abs());
    }
    let ratio = biases[0] / biases[1];
    assert!(
        (1.5..=3.0).contains(&ratio),
        "weak-order ratio {ratio} outside [1.5, 3] (biases {biases:?})"
    );
}

/// Brownian case: the empirical second moment stays within a C·Δt band of
/// the exact value (the scheme adds variance Δt per step exactly, so this
/// bound is dominated by sampling noise).
#[test]
fn brownian_second_moment_within_dt_band() {
    for (n_steps, seed) in [(100usize, 11u64), (200, 12)] {
        let dt = 1.0 / n_steps as f64;
        let model = ItoModel::scalar(InitialLaw::Point(vec![0.0]), |_, _| 0.0, |_, _| 1.0);
        let grid = TimeGrid::new(0.0, 1.0, n_steps).unwrap();
        let ens = simulate_ito(&model, &grid, 100_000, seed).unwrap();
        let xs = ens.marginal_at_step(n_steps);
        let m2 = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert!(
            (m2 - 1.0).abs() <= 2.0 * dt,
            "n_steps {n_steps}: |{m2} - 1| > 2Δt"
        );
    }
}

/// Mimic reports and audit reports round-trip through their JSON schemas.
#[test]
fn report_json_roundtrip() {
    use mproj_core::diagnostics::{compare_marginals, MarginalRef, MimicReport};
    let mut rng = mproj_core::rng::PathRng::new(4, 4);
    let a: Vec<f64> = (0..500).map(|_| rng.normal()).collect();
    let b: Vec<f64> = (0..500).map(|_| rng.normal()).collect();
    let entry = compare_marginals(&a, &MarginalRef::Sample(&b), 0.5, "resimulate").unwrap();
    let report = MimicReport {
        version: 1,
        seed: 9,
        entries: vec![entry],
        tolerance_ks: 0.02,
        tolerance_route: 0.01,
        pass: true,
    };
    let text = serde_json::to_string(&report).unwrap();
    let back: MimicReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report, back);
}

/// Every coefficient object produced by the estimators passes its own
/// invariants; spot check the validator rejects corrupted fields.
#[test]
fn validator_rejects_corruption() {
    let z = UniformGrid::new(-1.0, 1.0, 9).unwrap();
    let good =
        ProjectedCoefficients::from_fields(vec![0.0], z, |_, zv| -zv, |_, _| 0.5).unwrap();
    good.validate().unwrap();
    let mut bad = good.clone();
    bad.a[3] = -0.1;
    assert!(bad.validate().is_err());
    let mut bad = good.clone();
    bad.sigma[2] = 0.9; // breaks σ² = a
    assert!(bad.validate().is_err());
}
