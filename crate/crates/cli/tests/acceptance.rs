//! Acceptance suite: every criterion runs at its stated tolerance and prints
//! one pass/fail line (run with `--nocapture` to see the lines; the test
//! verdicts carry the same information).
//!
//! Criteria 1, 2 and 9 carry wall-clock budgets, so this suite is best run
//! with `--test-threads=1`.

use std::sync::Arc;
use std::time::Instant;

use mproj_core::coeffs::ProjectedCoefficients;
use mproj_core::compensator::{pushforward_density, pushforward_set_mass, Amplitude};
use mproj_core::config::ExperimentConfig;
use mproj_core::diagnostics::{check_martingale_preservation, ks_statistic_sorted};
use mproj_core::grid::{TimeGrid, UniformGrid};
use mproj_core::levy::{JumpDistribution, LevyDensitySpec};
use mproj_core::model::{
    FunctionOfMarkovSpec, InitialLaw, ItoModel, JumpSpec, ThetaDynamics, TimeChangeSpec,
};
use mproj_core::pide::{build_generator_matrix, evolve_forward, Scheme};
use mproj_core::pipeline;
use mproj_core::projection::{
    conditional_expectation_slice, estimate_projected_coefficients, project_function_of_markov,
    project_time_changed_levy, JumpKernelSource, ProjectionSettings, SliceProblem,
};
use mproj_core::quad::{normal_cdf, normal_pdf};
use mproj_core::rng::PathRng;
use mproj_core::simulate::{simulate_ito, simulate_projected, simulate_time_changed};

fn verdict(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion}: {detail}");
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

fn gaussian_p0(x: &UniformGrid, sigma0: f64) -> Vec<f64> {
    let raw: Vec<f64> = x
        .nodes()
        .iter()
        .map(|&v| normal_pdf(v / sigma0) / sigma0)
        .collect();
    let mass: f64 = raw.iter().sum::<f64>() * x.dx();
    raw.iter().map(|v| v / mass).collect()
}

#[test]
fn criterion_01_brownian_sanity() {
    let start = Instant::now();
    let model = ItoModel::scalar(InitialLaw::Point(vec![0.0]), |_, _| 0.0, |_, _| 1.0);
    let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
    let ens = simulate_ito(&model, &grid, 100_000, 42).unwrap();
    let xs = sorted(ens.marginal_at_step(100));
    let ks = ks_statistic_sorted(&xs, normal_cdf);
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "01 brownian sanity",
        ks <= 0.01 && elapsed < 10.0,
        &format!("KS = {ks:.5} (<= 0.01), runtime {elapsed:.2}s (< 10s)"),
    );
}

fn heat_l1(nx: usize, nt: usize) -> (f64, f64) {
    let z = UniformGrid::new(-6.0, 6.0, 9).unwrap();
    let coeffs =
        ProjectedCoefficients::from_fields(vec![0.0], z, |_, _| 0.0, |_, _| 1.0).unwrap();
    let x = UniformGrid::new(-6.0, 6.0, nx).unwrap();
    let sigma0 = 0.05;
    let p0 = gaussian_p0(&x, sigma0);
    let grid = TimeGrid::new(0.0, 1.0, nt).unwrap();
    let (field, _) = evolve_forward(&p0, &coeffs, &x, &grid, Scheme::Imex, &[1.0]).unwrap();
    let sd = (sigma0 * sigma0 + 1.0).sqrt();
    let l1 = field
        .slice(0)
        .iter()
        .enumerate()
        .map(|(i, &p)| (p - normal_pdf(x.node(i) / sd) / sd).abs())
        .sum::<f64>()
        * x.dx();
    (l1, (field.mass(0) - 1.0).abs())
}

#[test]
fn criterion_02_heat_equation_pide() {
    let start = Instant::now();
    let (l1, mass_drift) = heat_l1(1201, 1000);
    let (l1_fine, _) = heat_l1(2401, 2000);
    let ratio = l1 / l1_fine;
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "02 heat equation",
        l1 <= 5e-3 && mass_drift <= 1e-3 && (1.5..=4.5).contains(&ratio) && elapsed < 30.0,
        &format!(
            "L1 = {l1:.2e} (<= 5e-3), mass drift {mass_drift:.2e} (<= 1e-3), \
             refinement ratio {ratio:.2} (in [1.5, 4.5]), runtime {elapsed:.2}s (< 30s)"
        ),
    );
}

#[test]
fn criterion_03_compound_poisson_pide() {
    // jumps ±1 with rate 1/2 each (total λ = 1), b = a = 0, t = 0.5
    let z = UniformGrid::new(-8.0, 8.0, 9).unwrap();
    let mut coeffs =
        ProjectedCoefficients::from_fields(vec![0.0], z, |_, _| 0.0, |_, _| 0.0).unwrap();
    let y = UniformGrid::new(-2.0, 2.0, 129).unwrap();
    let nz = coeffs.z_grid.n;
    let ny = y.n;
    let mut n = vec![0.0; ny * nz];
    for (target, mass) in [(1.0, 0.5), (-1.0, 0.5)] {
        let (il, w) = y.locate(target);
        let j = if w < 0.5 { il } else { il + 1 };
        for i in 0..nz {
            n[j * nz + i] += mass / y.weight(j);
        }
    }
    coeffs.kernel = Some(mproj_core::coeffs::JumpKernelGrid {
        y_grid: y,
        n,
        tail: vec![0.0; nz],
    });
    coeffs.integrability_bound = f64::INFINITY;
    coeffs.validate().unwrap();

    let x = UniformGrid::new(-8.0, 8.0, 1025).unwrap();
    let sigma0 = 0.05;
    let p0 = gaussian_p0(&x, sigma0);
    let grid = TimeGrid::new(0.0, 0.5, 500).unwrap();
    let (field, _) = evolve_forward(&p0, &coeffs, &x, &grid, Scheme::Imex, &[0.5]).unwrap();

    let lam_t = 0.5f64;
    let choose = |n: usize, k: usize| -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    };
    let series = |xv: f64| -> f64 {
        let mut acc = 0.0;
        let mut fact = 1.0;
        for k in 0..4usize {
            if k > 0 {
                fact *= k as f64;
            }
            let pk = (-lam_t).exp() * lam_t.powi(k as i32) / fact;
            for u in 0..=k {
                let shift = (2 * u) as f64 - k as f64;
                acc += pk * choose(k, u) / 2f64.powi(k as i32)
                    * normal_pdf((xv - shift) / sigma0)
                    / sigma0;
            }
        }
        acc
    };
    let l1 = field
        .slice(0)
        .iter()
        .enumerate()
        .map(|(i, &p)| (p - series(x.node(i))).abs())
        .sum::<f64>()
        * x.dx();
    verdict(
        "03 compound-Poisson pide",
        l1 <= 1e-2,
        &format!("L1 vs 4-term convolution series = {l1:.2e} (<= 1e-2)"),
    );
}

#[test]
fn criterion_04_pushforward_density() {
    let nu = LevyDensitySpec::FiniteActivity {
        intensity: 1.0,
        jump: JumpDistribution::Density {
            pdf: Arc::new(|y: f64| 0.5 * (-y.abs()).exp()),
            support: (-60.0, 60.0),
        },
    };
    let psi = |y: f64| 2.0 * y;
    let amp = Amplitude::new(&psi, (-30.0, 30.0));
    let mut max_err = 0.0f64;
    for y in [-5.0, -2.0, -0.5, 0.25, 1.0, 3.0, 8.0] {
        let m = pushforward_density(&amp, &nu, y).unwrap();
        let expect = 0.25 * (-y.abs() / 2.0).exp();
        max_err = max_err.max((m - expect).abs());
    }
    let pointwise_ok = max_err <= 1e-10;

    // integral of the density against set masses on 10 random intervals
    let mut rng = PathRng::new(2026, 0);
    let mut consistent = true;
    let mut worst = 0.0f64;
    for trial in 0..10 {
        let a = 0.2 + 3.0 * rng.uniform();
        let b = a + 0.2 + 2.0 * rng.uniform();
        let (lo, hi) = if trial % 2 == 0 { (a, b) } else { (-b, -a) };
        let int = mproj_core::quad::adaptive_simpson(
            &|y| pushforward_density(&amp, &nu, y).unwrap(),
            lo,
            hi,
            1e-10,
        );
        let (mass, se) =
            pushforward_set_mass(&amp, &nu, (lo, hi), 300_000, 500 + trial as u64).unwrap();
        let dev = (int - mass).abs() / se.max(1e-12);
        worst = worst.max(dev);
        if dev > 3.0 {
            consistent = false;
        }
    }
    verdict(
        "04 pushforward",
        pointwise_ok && consistent,
        &format!(
            "max pointwise error {max_err:.2e} (<= 1e-10), worst set-mass deviation \
             {worst:.2} se (<= 3)"
        ),
    );
}

#[test]
fn criterion_05_conditional_slice() {
    let q = |z: &[f64]| normal_pdf(z[0]) * normal_pdf(z[1]);
    let f = |z: &[f64]| z[0] + z[1];
    let df = |_: &[f64]| 1.0;
    let domain = [(-10.0, 10.0), (-10.0, 10.0)];
    let problem = SliceProblem {
        dim: 2,
        domain: &domain,
        q: &q,
        f: &f,
        df_dzd: &df,
        tol: 1e-9,
    };
    let g = |z: &[f64]| z[0];
    let w = 0.4;
    let v = conditional_expectation_slice(&problem, &g, w).unwrap();
    let quad_err = (v - w / 2.0).abs();

    // Monte Carlo oracle: kernel conditioning on 10^6 draws
    let mut rng = PathRng::new(77, 7);
    let h = 0.05;
    let (mut num, mut den) = (0.0, 0.0);
    for _ in 0..1_000_000 {
        let z1 = rng.normal();
        let z2 = rng.normal();
        let k = normal_pdf((z1 + z2 - w) / h);
        num += k * z1;
        den += k;
    }
    let mc = num / den;
    let mc_err = (v - mc).abs();
    verdict(
        "05 conditional slice",
        quad_err <= 1e-6 && mc_err <= 1e-2,
        &format!(
            "quadrature error {quad_err:.2e} (<= 1e-6), MC-oracle gap {mc_err:.2e} (<= 1e-2)"
        ),
    );
}

#[test]
fn criterion_06_function_of_markov_projection() {
    let spec = FunctionOfMarkovSpec {
        dim: 2,
        domain: vec![(-8.0, 8.0), (-8.0, 8.0)],
        f: Arc::new(|z: &[f64]| z[0] + z[1]),
        grad_f: Arc::new(|_, g: &mut [f64]| {
            g[0] = 1.0;
            g[1] = 1.0;
        }),
        hess_f: Arc::new(|_, h: &mut [f64]| h.iter_mut().for_each(|v| *v = 0.0)),
        q: Arc::new(|t: f64, z: &[f64]| {
            let var = (1.0 - (-2.0 * t).exp()) / 2.0;
            let sd = var.sqrt().max(1e-9);
            normal_pdf(z[0] / sd) / sd * normal_pdf(z[1] / sd) / sd
        }),
        b_z: Arc::new(|_, z: &[f64], out: &mut [f64]| {
            out[0] = -z[0];
            out[1] = -z[1];
        }),
        sigma_z: Arc::new(|_, _, out: &mut [f64]| {
            out[0] = 1.0;
            out[1] = 0.0;
            out[2] = 0.0;
            out[3] = 1.0;
        }),
        jumps: None,
    };
    let w_grid = UniformGrid::new(-1.5, 1.5, 13).unwrap();
    let proj = project_function_of_markov(&spec, &[0.25, 0.5, 1.0], &w_grid, None, 1e-9).unwrap();
    let mut max_b = 0.0f64;
    let mut max_a = 0.0f64;
    for k in 0..3 {
        for i in 0..w_grid.n {
            let w = w_grid.node(i);
            max_b = max_b.max((proj.coeffs.b[proj.coeffs.idx(k, i)] + w).abs());
            max_a = max_a.max((proj.coeffs.a[proj.coeffs.idx(k, i)] - 2.0).abs());
        }
    }
    verdict(
        "06 function-of-Markov projection",
        max_b <= 1e-6 && max_a <= 1e-6,
        &format!("max |b + w| = {max_b:.2e}, max |a - 2| = {max_a:.2e} (<= 1e-6)"),
    );
}

#[test]
fn criterion_07_time_change() {
    let spec = TimeChangeSpec {
        base_drift: 0.0,
        base_sigma2: 1.0,
        base_levy: None,
        theta: ThetaDynamics::Deterministic(Arc::new(|t: f64| 1.0 + t)),
        initial: InitialLaw::Point(vec![0.0]),
    };
    let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
    let ens = simulate_time_changed(&spec, &grid, 50_000, 1234).unwrap();
    let settings = ProjectionSettings::new(UniformGrid::new(-4.0, 4.0, 81).unwrap());
    let coeffs = project_time_changed_levy(0.0, 1.0, None, &ens, &settings).unwrap();

    // α̂ within 5% of 1 + t on the central bins
    let mut max_rel = 0.0f64;
    for (k, &t) in coeffs.times.iter().enumerate() {
        let truth = 1.0 + t;
        for i in 30..51 {
            let rel = (coeffs.a[coeffs.idx(k, i)] - truth).abs() / truth;
            max_rel = max_rel.max(rel);
        }
    }
    let alpha_ok = max_rel <= 0.05;

    // forward equation against the closed-form marginal N(0, t + t²/2)
    let x = UniformGrid::new(-6.0, 6.0, 1201).unwrap();
    let p0 = pipeline::initial_density(&spec.initial, &x, 2.0).unwrap();
    let pide_grid = TimeGrid::new(0.0, 1.0, 1000).unwrap();
    let (field, _) = evolve_forward(&p0, &coeffs, &x, &pide_grid, Scheme::Imex, &[1.0]).unwrap();
    let sd = 1.5f64.sqrt();
    let l1 = field
        .slice(0)
        .iter()
        .enumerate()
        .map(|(i, &p)| (p - normal_pdf(x.node(i) / sd) / sd).abs())
        .sum::<f64>()
        * x.dx();
    verdict(
        "07 time change",
        alpha_ok && l1 <= 1e-2,
        &format!(
            "max rate-field relative error {max_rel:.3} (<= 0.05), \
             L1 vs closed form {l1:.2e} (<= 1e-2)"
        ),
    );
}

fn mimic_config(model: serde_json::Value, seed: u64) -> ExperimentConfig {
    serde_json::from_value(serde_json::json!({
        "version": 1,
        "model": model,
        "grid": {"t_start": 0.0, "t_end": 1.0, "n_steps": 100},
        "n_paths": 200_000,
        "seed": seed,
        "checkpoints": [0.25, 0.5, 1.0],
        "projection": {"z_min": -1.5, "z_max": 1.5, "n_z": 121},
        "pide": {"x_min": -2.5, "x_max": 2.5, "n_x": 1001, "n_t": 1000},
        "verify": {"route": "both", "tolerance_ks": 0.02, "tolerance_route": 0.01}
    }))
    .unwrap()
}

#[test]
fn criterion_08_involutivity_local_vol() {
    // regression accuracy on a dispersed start
    let model = ItoModel::scalar(
        InitialLaw::Gaussian {
            mean: vec![0.0],
            std: vec![0.3],
        },
        |_, _| 0.0,
        |_, s| 0.2 + 0.1 * s.x[0].tanh(),
    );
    let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
    let ens = simulate_ito(&model, &grid, 200_000, 88).unwrap();
    let settings =
        ProjectionSettings::new(UniformGrid::new(-1.5, 1.5, 121).unwrap()).with_bandwidth(0.1);
    let coeffs = estimate_projected_coefficients(&ens, &settings, JumpKernelSource::None).unwrap();
    let zg = &coeffs.z_grid;
    let mut worst_rel = 0.0f64;
    let mut busy = 0;
    for &k in &[25usize, 50, 99] {
        let mut counts = vec![0usize; zg.n];
        for p in 0..ens.n_paths {
            let (il, w) = zg.locate(ens.state_proj(p, k));
            counts[if w < 0.5 { il } else { il + 1 }] += 1;
        }
        for i in 0..zg.n {
            if counts[i] >= 500 {
                let z = zg.node(i);
                let truth = (0.2 + 0.1 * z.tanh()).powi(2);
                let rel = (coeffs.a[coeffs.idx(k, i)] - truth).abs() / truth;
                worst_rel = worst_rel.max(rel);
                busy += 1;
            }
        }
    }
    drop(ens);
    let regression_ok = worst_rel <= 0.10 && busy >= 50;

    // end-to-end marginal agreement through the full pipeline
    let cfg = mimic_config(
        serde_json::json!({
            "name": "local_vol",
            "params": {"sigma0": 0.2, "sigma1": 0.1, "x0_std": 0.3}
        }),
        2_024,
    );
    let art = pipeline::run_mimic(&cfg).unwrap();
    let max_ks = art
        .report
        .entries
        .iter()
        .filter(|e| e.label != "route_agreement")
        .map(|e| e.ks)
        .fold(0.0f64, f64::max);
    verdict(
        "08 involutivity",
        regression_ok && max_ks <= 0.02,
        &format!(
            "worst coefficient relative error {worst_rel:.3} (<= 0.10 on {busy} busy cells), \
             max marginal KS {max_ks:.4} (<= 0.02)"
        ),
    );
}

#[test]
fn criterion_09_headline_running_average_vol() {
    let start = Instant::now();
    let cfg = mimic_config(
        serde_json::json!({
            "name": "running_average_vol",
            "params": {"v0": 0.2, "v1": 0.1}
        }),
        31_415,
    );
    let art = pipeline::run_mimic(&cfg).unwrap();
    let mut max_route_ks = 0.0f64;
    let mut max_agree_ks = 0.0f64;
    for e in &art.report.entries {
        if e.label == "route_agreement" {
            max_agree_ks = max_agree_ks.max(e.ks);
        } else {
            max_route_ks = max_route_ks.max(e.ks);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "09 headline mimicking",
        max_route_ks <= 0.02 && max_agree_ks <= 0.01 && elapsed < 300.0,
        &format!(
            "max source-vs-route KS {max_route_ks:.4} (<= 0.02), \
             route agreement KS {max_agree_ks:.4} (<= 0.01), runtime {elapsed:.1}s (< 300s)"
        ),
    );
}

#[test]
fn criterion_10_martingale_preservation() {
    // compensated compound Poisson: ±1 jumps at rate 2, zero drift
    let levy = LevyDensitySpec::FiniteActivity {
        intensity: 2.0,
        jump: JumpDistribution::Atoms {
            atoms: vec![(0.5, vec![1.0]), (0.5, vec![-1.0])],
        },
    };
    let model = ItoModel::scalar(InitialLaw::Point(vec![0.0]), |_, _| 0.0, |_, _| 0.0)
        .with_jumps(JumpSpec::PoissonDriven {
            levy,
            amplitude: None,
            amplitude_state_free: true,
        });
    let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
    let checkpoints = [0.25, 0.5, 1.0];
    let ens = simulate_ito(&model, &grid, 100_000, 55).unwrap();
    let source_checks = check_martingale_preservation(&ens, &checkpoints).unwrap();

    let settings = ProjectionSettings::new(UniformGrid::new(-6.0, 6.0, 49).unwrap())
        .with_y_grid(UniformGrid::new(-2.0, 2.0, 129).unwrap());
    let coeffs =
        estimate_projected_coefficients(&ens, &settings, JumpKernelSource::Marks).unwrap();
    drop(ens);
    let (proj_ens, _) = simulate_projected(
        &coeffs,
        &InitialLaw::Point(vec![0.0]),
        &grid,
        100_000,
        56,
    )
    .unwrap();
    let proj_checks = check_martingale_preservation(&proj_ens, &checkpoints).unwrap();

    let src_ok = source_checks.iter().all(|c| c.pass);
    let proj_ok = proj_checks.iter().all(|c| c.pass);
    let worst_z = source_checks
        .iter()
        .chain(proj_checks.iter())
        .map(|c| c.z_score.abs())
        .fold(0.0f64, f64::max);
    verdict(
        "10 martingale preservation",
        src_ok && proj_ok,
        &format!("source and projection mean-constancy pass; worst |z| = {worst_z:.2} (<= 3)"),
    );
}

#[test]
fn criterion_11_discrete_duality() {
    let mut rng = PathRng::new(909, 0);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let z = UniformGrid::new(-3.0, 3.0, 13).unwrap();
        let b0 = 4.0 * rng.uniform() - 2.0;
        let b1 = rng.uniform() - 0.5;
        let a0 = 0.1 + 1.9 * rng.uniform();
        let a1 = 0.05 * rng.uniform();
        let mut coeffs = ProjectedCoefficients::from_fields(
            vec![0.0],
            z,
            |_, zv| b0 + b1 * zv,
            |_, zv| a0 + a1 * zv.cos(),
        )
        .unwrap();
        if trial % 2 == 0 {
            let y = UniformGrid::new(-1.5, 1.5, 25).unwrap();
            let nz = coeffs.z_grid.n;
            let ny = y.n;
            let mut n = vec![0.0; ny * nz];
            let rate_plus = rng.uniform();
            let rate_minus = rng.uniform();
            for (target, mass) in [(0.75, rate_plus), (-1.125, rate_minus)] {
                let (il, w) = y.locate(target);
                let j = if w < 0.5 { il } else { il + 1 };
                for i in 0..nz {
                    n[j * nz + i] += mass / y.weight(j);
                }
            }
            coeffs.kernel = Some(mproj_core::coeffs::JumpKernelGrid {
                y_grid: y,
                n,
                tail: vec![0.0; nz],
            });
        }
        let x = UniformGrid::new(-3.0, 3.0, 101).unwrap();
        let gen = build_generator_matrix(&coeffs, &x, 0).unwrap();
        let f: Vec<f64> = (0..x.n).map(|_| rng.normal()).collect();
        let p: Vec<f64> = (0..x.n).map(|_| rng.normal()).collect();
        let mut lf = vec![0.0; x.n];
        let mut ltp = vec![0.0; x.n];
        gen.apply(&f, &mut lf);
        gen.apply_transpose(&p, &mut ltp);
        let lhs: f64 = lf.iter().zip(p.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = f.iter().zip(ltp.iter()).map(|(a, b)| a * b).sum();
        let nf: f64 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        let np: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max((lhs - rhs).abs() / (nf * np));
    }
    verdict(
        "11 discrete duality",
        worst <= 1e-12,
        &format!("worst |<Lf,p> - <f,L^T p>| / (|f||p|) = {worst:.2e} (<= 1e-12)"),
    );
}

#[test]
fn criterion_12_determinism() {
    // criterion 9's config, run twice through the binary: byte-identical
    // reports
    let dir = std::env::temp_dir().join("mproj-acceptance-determinism");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = serde_json::json!({
        "version": 1,
        "model": {"name": "running_average_vol", "params": {"v0": 0.2, "v1": 0.1}},
        "grid": {"t_start": 0.0, "t_end": 1.0, "n_steps": 100},
        "n_paths": 200_000,
        "seed": 31_415,
        "checkpoints": [0.25, 0.5, 1.0],
        "projection": {"z_min": -1.5, "z_max": 1.5, "n_z": 121},
        "pide": {"x_min": -2.5, "x_max": 2.5, "n_x": 1001, "n_t": 1000},
        "verify": {"route": "both", "tolerance_ks": 0.02, "tolerance_route": 0.01}
    });
    let cfg_path = dir.join("cfg.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    for (sub, threads) in [("a", "1"), ("b", "2")] {
        let out = std::process::Command::new(env!("CARGO_BIN_EXE_mproj"))
            .args(["mimic", "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(dir.join(sub))
            .args(["--threads", threads])
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "mimic run {sub} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let mut identical = true;
    let mut detail = String::new();
    for f in ["report.json", "report.csv", "coefficients.csv", "density.csv"] {
        let a = std::fs::read(dir.join("a").join(f)).unwrap();
        let b = std::fs::read(dir.join("b").join(f)).unwrap();
        if a != b {
            identical = false;
            detail.push_str(&format!("{f} differs; "));
        }
    }
    if identical {
        detail = "report.json, report.csv, coefficients.csv, density.csv byte-identical \
                  across runs and thread counts"
            .to_string();
    }
    verdict("12 determinism", identical, &detail);
}
