//! End-to-end mimicking pipeline: simulate the source, project its
//! coefficients, rebuild the marginals through the forward equation and/or
//! by re-simulating the projected SDE, and compare.
//!
//! One master seed drives everything; each stage derives its own stream
//! family, so a config fully determines every output byte.

use crate::coeffs::{DensityField, ProjectedCoefficients};
use crate::config::{ExperimentConfig, VerifyRoute};
use crate::diagnostics::{compare_marginals, MarginalRef, MimicEntry, MimicReport};
use crate::ensemble::PathEnsemble;
use crate::error::{CoreError, Result};
use crate::grid::UniformGrid;
use crate::io;
use crate::model::InitialLaw;
use crate::pide::{evolve_forward, SolveDiagnostics};
use crate::projection::{
    estimate_projected_coefficients, project_function_of_markov, project_time_changed_levy,
    JumpKernelSource, ProjectionSettings,
};
use crate::registry::{build_model, BuiltModel};
use crate::simulate::{
    seed_domain, simulate_ito, simulate_projected, simulate_time_changed, stage_seed,
};

/// Closed-form projections evaluate at most this many coefficient time
/// slices (the fields are piecewise constant in time between them).
const MAX_CLOSED_FORM_SLICES: usize = 20;

/// Everything a mimic run produces in memory.
pub struct MimicArtifacts {
    pub report: MimicReport,
    pub coeffs: ProjectedCoefficients,
    pub density: Option<DensityField>,
    pub solve_diagnostics: Option<SolveDiagnostics>,
    /// Per checkpoint: time and the retained source marginal sample.
    pub source_marginals: Vec<(f64, Vec<f64>)>,
    pub warnings: Vec<String>,
}

fn projection_settings(cfg: &ExperimentConfig) -> Result<ProjectionSettings> {
    let pc = cfg
        .projection
        .as_ref()
        .ok_or_else(|| CoreError::config("projection: section required for this command"))?;
    let z_grid = UniformGrid::new(pc.z_min, pc.z_max, pc.n_z)?;
    let mut settings = ProjectionSettings::new(z_grid)
        .with_mode(pc.estimator)
        .with_min_cell_count(pc.min_cell_count);
    if let Some(h) = pc.bandwidth {
        settings = settings.with_bandwidth(h);
    }
    if let (Some(lo), Some(hi), Some(n)) = (pc.y_min, pc.y_max, pc.n_y) {
        settings = settings.with_y_grid(UniformGrid::new(lo, hi, n)?);
    }
    Ok(settings)
}

/// Simulate the source model named by the config.
pub fn simulate_source(cfg: &ExperimentConfig) -> Result<(BuiltModel, PathEnsemble)> {
    let model = build_model(&cfg.model)?;
    let grid = cfg.time_grid()?;
    let seed = stage_seed(cfg.seed, seed_domain::SOURCE);
    let ens = match &model {
        BuiltModel::Ito(m) => simulate_ito(m, &grid, cfg.n_paths, seed)?,
        BuiltModel::TimeChanged(s) => simulate_time_changed(s, &grid, cfg.n_paths, seed)?,
        BuiltModel::FunctionOfMarkov { sim, .. } => {
            simulate_ito(sim, &grid, cfg.n_paths, seed)?
        }
    };
    Ok((model, ens))
}

/// Project the source ensemble per the config.
pub fn project_source(
    cfg: &ExperimentConfig,
    model: &BuiltModel,
    ens: &PathEnsemble,
) -> Result<ProjectedCoefficients> {
    let settings = projection_settings(cfg)?;
    match model {
        BuiltModel::Ito(m) => {
            let source = match &m.jumps {
                crate::model::JumpSpec::None => JumpKernelSource::None,
                crate::model::JumpSpec::PoissonDriven { .. } => JumpKernelSource::Marks,
                crate::model::JumpSpec::CompensatorDirect { density, .. } => {
                    JumpKernelSource::Direct(density.as_ref())
                }
            };
            estimate_projected_coefficients(ens, &settings, source)
        }
        BuiltModel::TimeChanged(s) => project_time_changed_levy(
            s.base_drift,
            s.base_sigma2,
            s.base_levy.as_ref(),
            ens,
            &settings,
        ),
        BuiltModel::FunctionOfMarkov { spec, .. } => {
            // closed-form slice quadrature is costly per node: cap the number
            // of coefficient slices (fields stay left-constant in between)
            let stride = ens.grid.n_steps.div_ceil(MAX_CLOSED_FORM_SLICES);
            let dt = ens.grid.dt();
            // midpoints avoid the degenerate density at t = 0
            let times: Vec<f64> = (0..ens.grid.n_steps)
                .step_by(stride)
                .map(|k| ens.grid.time(k) + 0.5 * dt)
                .collect();
            let proj = project_function_of_markov(
                spec,
                &times,
                &settings.z_grid,
                settings.y_grid.as_ref(),
                1e-6,
            )?;
            Ok(proj.coeffs)
        }
    }
}

/// Initial density for the forward equation, on the PIDE grid.
pub fn initial_density(
    initial: &InitialLaw,
    x_grid: &UniformGrid,
    mollify_cells: f64,
) -> Result<Vec<f64>> {
    let mollify_std = mollify_cells * x_grid.dx();
    let field = DensityField::from_density(x_grid.clone(), 0.0, |x| {
        initial.density_1d(0, x, mollify_std)
    })?;
    Ok(field.p)
}

/// Full mimic run per the config.
pub fn run_mimic(cfg: &ExperimentConfig) -> Result<MimicArtifacts> {
    cfg.validate()?;
    let verify = cfg
        .verify
        .clone()
        .ok_or_else(|| CoreError::config("verify: section required for mimic runs"))?;
    let checkpoints = if cfg.checkpoints.is_empty() {
        vec![cfg.grid.t_end]
    } else {
        cfg.checkpoints.clone()
    };

    let (model, mut ens) = simulate_source(cfg)?;
    let coeffs = project_source(cfg, &model, &ens)?;

    let source_marginals: Vec<(f64, Vec<f64>)> = checkpoints
        .iter()
        .map(|&t| {
            let step = ens.step_nearest(t);
            (ens.grid.time(step), ens.marginal_at_step(step))
        })
        .collect();
    ens.strip_records();
    let initial = model.initial().clone();
    drop(ens);

    let grid = cfg.time_grid()?;
    let mut entries: Vec<MimicEntry> = Vec::new();
    let mut density = None;
    let mut solve_diagnostics = None;
    let mut resim_marginals: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();

    let want_resim = matches!(verify.route, VerifyRoute::Resimulate | VerifyRoute::Both);
    let want_pide = matches!(verify.route, VerifyRoute::Pide | VerifyRoute::Both);

    if want_resim {
        let n_resim = verify.n_paths_resim.unwrap_or(cfg.n_paths);
        let seed = stage_seed(cfg.seed, seed_domain::RESIMULATE);
        let (mut resim, warn) = simulate_projected(&coeffs, &initial, &grid, n_resim, seed)?;
        if !warn.thinning_slices.is_empty() {
            warnings.push(format!(
                "thinning accuracy degraded on {} coefficient slices (Λ_max·Δt > 0.5)",
                warn.thinning_slices.len()
            ));
        }
        resim.strip_records();
        for &(t, ref src) in &source_marginals {
            let step = resim.step_nearest(t);
            let sample = resim.marginal_at_step(step);
            // mimicking realization first: its moments go into the report row
            let entry = compare_marginals(&sample, &MarginalRef::Sample(src), t, "resimulate")?;
            entries.push(entry);
            resim_marginals.push((t, sample));
        }
    }

    if want_pide {
        let pc = cfg
            .pide
            .as_ref()
            .ok_or_else(|| CoreError::config("pide: section required for this verify route"))?;
        let x_grid = UniformGrid::new(pc.x_min, pc.x_max, pc.n_x)?;
        let p0 = initial_density(&initial, &x_grid, pc.mollify_cells)?;
        let pide_grid =
            crate::grid::TimeGrid::new(cfg.grid.t_start, cfg.grid.t_end, pc.n_t)?;
        let (field, diag) =
            evolve_forward(&p0, &coeffs, &x_grid, &pide_grid, pc.scheme, &checkpoints)?;
        for &(t, ref src) in &source_marginals {
            let k = field
                .times
                .iter()
                .position(|&ft| (ft - t).abs() < 1e-9)
                .ok_or_else(|| CoreError::numeric("checkpoint missing from density output"))?;
            entries.push(compare_marginals(
                src,
                &MarginalRef::Density(&field, k),
                t,
                "pide",
            )?);
        }
        // route agreement: the re-simulated marginals against the density
        for (t, sample) in &resim_marginals {
            if let Some(k) = field.times.iter().position(|&ft| (ft - t).abs() < 1e-9) {
                entries.push(compare_marginals(
                    sample,
                    &MarginalRef::Density(&field, k),
                    *t,
                    "route_agreement",
                )?);
            }
        }
        warnings.extend(diag.warnings.iter().cloned());
        density = Some(field);
        solve_diagnostics = Some(diag);
    }

    let pass = entries.iter().all(|e| match e.label.as_str() {
        "route_agreement" => e.ks <= verify.tolerance_route,
        _ => e.ks <= verify.tolerance_ks,
    });

    let report = MimicReport {
        version: 1,
        seed: cfg.seed,
        entries,
        tolerance_ks: verify.tolerance_ks,
        tolerance_route: verify.tolerance_route,
        pass,
    };

    Ok(MimicArtifacts {
        report,
        coeffs,
        density,
        solve_diagnostics,
        source_marginals,
        warnings,
    })
}

/// Write the standard mimic outputs into a directory. Returns the list of
/// files written (relative names).
pub fn write_mimic_outputs(art: &MimicArtifacts, dir: &std::path::Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    io::write_report_json(&art.report, &dir.join("report.json"))?;
    written.push("report.json".to_string());
    io::write_report_csv(&art.report.entries, &dir.join("report.csv"))?;
    written.push("report.csv".to_string());
    io::write_coefficients_csv(&art.coeffs, &dir.join("coefficients.csv"))?;
    written.push("coefficients.csv".to_string());
    if art.coeffs.kernel.is_some() {
        io::write_kernel_csv(&art.coeffs, &dir.join("kernel.csv"))?;
        written.push("kernel.csv".to_string());
    }
    if let Some(field) = &art.density {
        io::write_density_csv(field, &dir.join("density.csv"))?;
        written.push("density.csv".to_string());
    }
    if let Some(diag) = &art.solve_diagnostics {
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("solver.json"))?);
        serde_json::to_writer_pretty(&mut w, diag)?;
        std::io::Write::write_all(&mut w, b"\n")?;
        written.push("solver.json".to_string());
    }
    Ok(written)
}
