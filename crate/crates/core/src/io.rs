//! File formats: fixed-header CSVs for grids, densities and reports, plus
//! the binary ensemble dump.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! write/read cycles reproduce every value bit for bit.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::coeffs::{DensityField, JumpKernelGrid, ProjectedCoefficients};
use crate::diagnostics::{MimicEntry, MimicReport};
use crate::ensemble::{JumpMark, PathEnsemble};
use crate::error::{CoreError, Result};
use crate::grid::{TimeGrid, UniformGrid};

const ENSEMBLE_MAGIC: &[u8; 4] = b"MPJE";
const ENSEMBLE_VERSION: u32 = 1;

fn open_writer(path: &Path) -> Result<BufWriter<std::fs::File>> {
    Ok(BufWriter::new(std::fs::File::create(path)?))
}

fn open_reader(path: &Path) -> Result<BufReader<std::fs::File>> {
    Ok(BufReader::new(std::fs::File::open(path)?))
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| CoreError::config(format!("cannot parse {what} from '{s}'")))
}

/// Write coefficient fields as `t,z,b,a` rows (kernel written separately).
pub fn write_coefficients_csv(coeffs: &ProjectedCoefficients, path: &Path) -> Result<()> {
    let mut w = open_writer(path)?;
    writeln!(w, "t,z,b,a")?;
    let nz = coeffs.z_grid.n;
    for (k, &t) in coeffs.times.iter().enumerate() {
        for i in 0..nz {
            writeln!(
                w,
                "{},{},{},{}",
                t,
                coeffs.z_grid.node(i),
                coeffs.b[k * nz + i],
                coeffs.a[k * nz + i]
            )?;
        }
    }
    Ok(())
}

/// Write the jump kernel as `t,z,y,n` rows plus one `t,z,inf,tail` row per
/// state node.
pub fn write_kernel_csv(coeffs: &ProjectedCoefficients, path: &Path) -> Result<()> {
    let kernel = coeffs
        .kernel
        .as_ref()
        .ok_or_else(|| CoreError::config("no jump kernel to export"))?;
    let mut w = open_writer(path)?;
    writeln!(w, "t,z,y,n")?;
    let nz = coeffs.z_grid.n;
    for (k, &t) in coeffs.times.iter().enumerate() {
        for i in 0..nz {
            let z = coeffs.z_grid.node(i);
            for j in 0..kernel.y_grid.n {
                writeln!(
                    w,
                    "{},{},{},{}",
                    t,
                    z,
                    kernel.y_grid.node(j),
                    kernel.density(k, j, i, nz)
                )?;
            }
            writeln!(w, "{},{},inf,{}", t, z, kernel.tail[k * nz + i])?;
        }
    }
    Ok(())
}

/// Read coefficients written by [`write_coefficients_csv`], optionally with
/// the kernel file from [`write_kernel_csv`].
pub fn read_coefficients_csv(path: &Path, kernel_path: Option<&Path>) -> Result<ProjectedCoefficients> {
    let r = open_reader(path)?;
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == "t,z,b,a" => {}
        _ => return Err(CoreError::config("coefficient CSV must start with t,z,b,a")),
    }
    let mut times: Vec<f64> = Vec::new();
    let mut zs: Vec<f64> = Vec::new();
    let mut b = Vec::new();
    let mut a = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(CoreError::config(format!("bad coefficient row: '{line}'")));
        }
        let t = parse_f64(parts[0], "t")?;
        let z = parse_f64(parts[1], "z")?;
        if times.last() != Some(&t) {
            times.push(t);
        }
        if times.len() == 1 {
            zs.push(z);
        }
        b.push(parse_f64(parts[2], "b")?);
        a.push(parse_f64(parts[3], "a")?);
    }
    if zs.len() < 2 {
        return Err(CoreError::config("coefficient CSV has fewer than 2 nodes"));
    }
    let z_grid = UniformGrid::new(zs[0], *zs.last().unwrap(), zs.len())?;
    // verify uniform spacing
    for (i, &z) in zs.iter().enumerate() {
        if (z - z_grid.node(i)).abs() > 1e-9 * (1.0 + z.abs()) {
            return Err(CoreError::config("state grid is not uniform"));
        }
    }
    let sigma: Vec<f64> = a.iter().map(|v| v.sqrt()).collect();
    let a: Vec<f64> = sigma.iter().map(|s| s * s).collect();

    let kernel = match kernel_path {
        None => None,
        Some(kp) => Some(read_kernel_csv(kp, times.len(), zs.len())?),
    };

    let coeffs = ProjectedCoefficients {
        times,
        z_grid,
        b,
        a,
        sigma,
        kernel,
        small_jump: None,
        integrability_bound: f64::INFINITY,
        fill_flags: Vec::new(),
    };
    coeffs.validate()?;
    Ok(coeffs)
}

fn read_kernel_csv(path: &Path, nk: usize, nz: usize) -> Result<JumpKernelGrid> {
    let r = open_reader(path)?;
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == "t,z,y,n" => {}
        _ => return Err(CoreError::config("kernel CSV must start with t,z,y,n")),
    }
    let mut ys: Vec<f64> = Vec::new();
    let mut dens: Vec<(usize, usize, usize, f64)> = Vec::new(); // (k, i, j, n)
    let mut tails: Vec<f64> = Vec::new();
    let (mut k, mut i) = (0usize, 0usize);
    let mut j = 0usize;
    let mut first_cell = true;
    let mut last_tz: Option<(f64, f64)> = None;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(CoreError::config(format!("bad kernel row: '{line}'")));
        }
        let t = parse_f64(parts[0], "t")?;
        let z = parse_f64(parts[1], "z")?;
        if last_tz != Some((t, z)) {
            if last_tz.is_some() {
                i += 1;
                if i == nz {
                    i = 0;
                    k += 1;
                }
                first_cell = false;
            }
            last_tz = Some((t, z));
            j = 0;
        }
        if parts[2].trim() == "inf" {
            tails.push(parse_f64(parts[3], "tail")?);
        } else {
            let y = parse_f64(parts[2], "y")?;
            if first_cell {
                ys.push(y);
            }
            dens.push((k, i, j, parse_f64(parts[3], "n")?));
            j += 1;
        }
    }
    if ys.len() < 2 {
        return Err(CoreError::config("kernel CSV has fewer than 2 y nodes"));
    }
    let y_grid = UniformGrid::new(ys[0], *ys.last().unwrap(), ys.len())?;
    let ny = y_grid.n;
    let mut n = vec![0.0; nk * ny * nz];
    for (k, i, j, v) in dens {
        if k >= nk || i >= nz || j >= ny {
            return Err(CoreError::config("kernel CSV shape mismatch"));
        }
        n[(k * ny + j) * nz + i] = v;
    }
    if tails.len() != nk * nz {
        return Err(CoreError::config(format!(
            "kernel CSV has {} tail rows, expected {}",
            tails.len(),
            nk * nz
        )));
    }
    Ok(JumpKernelGrid {
        y_grid,
        n,
        tail: tails,
    })
}

/// Write a density field as `t,x,p` rows.
pub fn write_density_csv(field: &DensityField, path: &Path) -> Result<()> {
    let mut w = open_writer(path)?;
    writeln!(w, "t,x,p")?;
    for (k, &t) in field.times.iter().enumerate() {
        let slice = field.slice(k);
        for (i, &p) in slice.iter().enumerate() {
            writeln!(w, "{},{},{}", t, field.x_grid.node(i), p)?;
        }
    }
    Ok(())
}

/// Read a density field written by [`write_density_csv`].
pub fn read_density_csv(path: &Path) -> Result<DensityField> {
    let r = open_reader(path)?;
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == "t,x,p" => {}
        _ => return Err(CoreError::config("density CSV must start with t,x,p")),
    }
    let mut times = Vec::new();
    let mut xs: Vec<f64> = Vec::new();
    let mut p = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(CoreError::config(format!("bad density row: '{line}'")));
        }
        let t = parse_f64(parts[0], "t")?;
        if times.last() != Some(&t) {
            times.push(t);
        }
        if times.len() == 1 {
            xs.push(parse_f64(parts[1], "x")?);
        }
        p.push(parse_f64(parts[2], "p")?);
    }
    if xs.len() < 2 {
        return Err(CoreError::config("density CSV has fewer than 2 nodes"));
    }
    let x_grid = UniformGrid::new(xs[0], *xs.last().unwrap(), xs.len())?;
    let field = DensityField { x_grid, times, p };
    field.validate()?;
    Ok(field)
}

/// Write a mimic report as fixed-header CSV: `t,ks,w1,m1,m2,m3,m4` where the
/// moment columns describe the mimicking-route marginal (the gridded
/// density's moments when the comparison ran against one). Full detail stays
/// in the JSON report.
pub fn write_report_csv(entries: &[MimicEntry], path: &Path) -> Result<()> {
    let mut w = open_writer(path)?;
    writeln!(w, "t,ks,w1,m1,m2,m3,m4")?;
    for e in entries {
        let m = match (&e.moments_reference, e.n_reference) {
            (Some(mr), None) => *mr,
            _ => e.moments_sample,
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            e.t, e.ks, e.w1, m.mean, m.variance, m.skewness, m.kurtosis
        )?;
    }
    Ok(())
}

/// Write per-checkpoint sample moments as `t,m1,m2,m3,m4`.
pub fn write_moments_csv(rows: &[(f64, crate::diagnostics::Moments)], path: &Path) -> Result<()> {
    let mut w = open_writer(path)?;
    writeln!(w, "t,m1,m2,m3,m4")?;
    for (t, m) in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            t, m.mean, m.variance, m.skewness, m.kurtosis
        )?;
    }
    Ok(())
}

/// Serialize a mimic report to pretty JSON (deterministic field order).
pub fn write_report_json(report: &MimicReport, path: &Path) -> Result<()> {
    let mut w = open_writer(path)?;
    serde_json::to_writer_pretty(&mut w, report)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64s(w: &mut impl Write, vs: &[f64]) -> Result<()> {
    for &v in vs {
        put_f64(w, v)?;
    }
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    for (i, chunk) in buf.chunks_exact(8).enumerate() {
        out[i] = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(out)
}

/// Binary ensemble dump.
///
/// Layout (little endian): magic `MPJE`, version u32, dim u32, proj_coord
/// u32, flags u32 (bit0 beta, bit1 diff_sq, bit2 theta), n_paths u64,
/// n_steps u64, t_start f64, t_end f64, seed u64, edge_clamps u64,
/// tail_draws u64; then values, beta, diff_sq, theta as f64 runs; then
/// n_marks u64 and per mark (path u32, step u32, y f64 × dim).
pub fn write_ensemble_dump(ens: &PathEnsemble, path: &Path) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_all(ENSEMBLE_MAGIC)?;
    put_u32(&mut w, ENSEMBLE_VERSION)?;
    put_u32(&mut w, ens.dim as u32)?;
    put_u32(&mut w, ens.proj_coord as u32)?;
    let flags = ens.beta.is_some() as u32
        | (ens.diff_sq.is_some() as u32) << 1
        | (ens.theta.is_some() as u32) << 2;
    put_u32(&mut w, flags)?;
    put_u64(&mut w, ens.n_paths as u64)?;
    put_u64(&mut w, ens.grid.n_steps as u64)?;
    put_f64(&mut w, ens.grid.t_start)?;
    put_f64(&mut w, ens.grid.t_end)?;
    put_u64(&mut w, ens.seed)?;
    put_u64(&mut w, ens.edge_clamps)?;
    put_u64(&mut w, ens.tail_draws)?;
    put_f64s(&mut w, &ens.values)?;
    if let Some(b) = &ens.beta {
        put_f64s(&mut w, b)?;
    }
    if let Some(a) = &ens.diff_sq {
        put_f64s(&mut w, a)?;
    }
    if let Some(th) = &ens.theta {
        put_f64s(&mut w, th)?;
    }
    put_u64(&mut w, ens.jump_marks.len() as u64)?;
    for m in &ens.jump_marks {
        put_u32(&mut w, m.path)?;
        put_u32(&mut w, m.step)?;
        put_f64s(&mut w, &m.y)?;
    }
    Ok(())
}

/// Read a dump written by [`write_ensemble_dump`].
pub fn read_ensemble_dump(path: &Path) -> Result<PathEnsemble> {
    let mut r = open_reader(path)?;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != ENSEMBLE_MAGIC {
        return Err(CoreError::config("not an ensemble dump (bad magic)"));
    }
    let version = get_u32(&mut r)?;
    if version != ENSEMBLE_VERSION {
        return Err(CoreError::config(format!(
            "unsupported ensemble dump version {version}"
        )));
    }
    let dim = get_u32(&mut r)? as usize;
    let proj_coord = get_u32(&mut r)? as usize;
    let flags = get_u32(&mut r)?;
    let n_paths = get_u64(&mut r)? as usize;
    let n_steps = get_u64(&mut r)? as usize;
    let t_start = get_f64(&mut r)?;
    let t_end = get_f64(&mut r)?;
    let seed = get_u64(&mut r)?;
    let edge_clamps = get_u64(&mut r)?;
    let tail_draws = get_u64(&mut r)?;
    let grid = TimeGrid::new(t_start, t_end, n_steps)?;
    let values = get_f64s(&mut r, n_paths * (n_steps + 1) * dim)?;
    let beta = if flags & 1 != 0 {
        Some(get_f64s(&mut r, n_paths * n_steps * dim)?)
    } else {
        None
    };
    let diff_sq = if flags & 2 != 0 {
        Some(get_f64s(&mut r, n_paths * n_steps * dim * dim)?)
    } else {
        None
    };
    let theta = if flags & 4 != 0 {
        Some(get_f64s(&mut r, n_paths * n_steps)?)
    } else {
        None
    };
    let n_marks = get_u64(&mut r)? as usize;
    let mut jump_marks = Vec::with_capacity(n_marks);
    for _ in 0..n_marks {
        let path = get_u32(&mut r)?;
        let step = get_u32(&mut r)?;
        let y = get_f64s(&mut r, dim)?;
        jump_marks.push(JumpMark { path, step, y });
    }
    let ens = PathEnsemble {
        grid,
        dim,
        n_paths,
        seed,
        proj_coord,
        values,
        beta,
        diff_sq,
        theta,
        jump_marks,
        edge_clamps,
        tail_draws,
    };
    ens.validate()?;
    Ok(ens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::model::{InitialLaw, ItoModel};
    use crate::simulate::simulate_ito;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("mproj-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn coefficients_roundtrip_bitexact() {
        let z = UniformGrid::new(-2.0, 2.0, 17).unwrap();
        let coeffs = ProjectedCoefficients::from_fields(
            vec![0.0, 0.125, 0.25],
            z,
            |t, zv| -zv + 0.1 * t,
            |t, zv| 0.3 + 0.07 * (zv + t).tanh(),
        )
        .unwrap();
        let path = tmp("coeffs.csv");
        write_coefficients_csv(&coeffs, &path).unwrap();
        let back = read_coefficients_csv(&path, None).unwrap();
        assert_eq!(coeffs.times, back.times);
        assert_eq!(coeffs.b, back.b);
        assert_eq!(coeffs.a, back.a);
        assert_eq!(coeffs.z_grid, back.z_grid);
    }

    #[test]
    fn kernel_roundtrip_bitexact() {
        let z = UniformGrid::new(-1.0, 1.0, 5).unwrap();
        let y = UniformGrid::new(-2.0, 2.0, 9).unwrap();
        let mut coeffs =
            ProjectedCoefficients::from_fields(vec![0.0, 0.5], z, |_, _| 0.0, |_, _| 1.0)
                .unwrap();
        let nk = 2;
        let (nz, ny) = (5, 9);
        let mut n = vec![0.0; nk * ny * nz];
        for (idx, v) in n.iter_mut().enumerate() {
            *v = (idx as f64 * 0.618).fract() * 0.2;
        }
        let tail: Vec<f64> = (0..nk * nz).map(|i| 1e-4 * i as f64).collect();
        coeffs.kernel = Some(JumpKernelGrid { y_grid: y, n, tail });
        coeffs.integrability_bound = 100.0;
        coeffs.validate().unwrap();
        let cpath = tmp("coeffs_k.csv");
        let kpath = tmp("kernel_k.csv");
        write_coefficients_csv(&coeffs, &cpath).unwrap();
        write_kernel_csv(&coeffs, &kpath).unwrap();
        let back = read_coefficients_csv(&cpath, Some(&kpath)).unwrap();
        let bk = back.kernel.as_ref().unwrap();
        let ok = coeffs.kernel.as_ref().unwrap();
        assert_eq!(ok.n, bk.n);
        assert_eq!(ok.tail, bk.tail);
        assert_eq!(ok.y_grid, bk.y_grid);
    }

    #[test]
    fn density_roundtrip_bitexact() {
        let x = UniformGrid::new(-4.0, 4.0, 201).unwrap();
        let f1 = DensityField::from_density(x.clone(), 0.5, crate::quad::normal_pdf).unwrap();
        let mut field = f1.clone();
        field.times.push(1.0);
        field.p.extend(f1.p.iter().map(|v| *v));
        let path = tmp("density.csv");
        write_density_csv(&field, &path).unwrap();
        let back = read_density_csv(&path).unwrap();
        assert_eq!(field.times, back.times);
        assert_eq!(field.p, back.p);
    }

    #[test]
    fn ensemble_dump_roundtrip() {
        use crate::levy::{JumpDistribution, LevyDensitySpec};
        use crate::model::JumpSpec;
        let levy = LevyDensitySpec::FiniteActivity {
            intensity: 1.5,
            jump: JumpDistribution::Atoms {
                atoms: vec![(0.5, vec![0.8]), (0.5, vec![-0.8])],
            },
        };
        let model = ItoModel::scalar(InitialLaw::Point(vec![0.3]), |_, _| 0.1, |_, _| 0.4)
            .with_jumps(JumpSpec::PoissonDriven {
                levy,
                amplitude: None,
                amplitude_state_free: true,
            });
        let grid = TimeGrid::new(0.0, 1.0, 25).unwrap();
        let ens = simulate_ito(&model, &grid, 200, 77).unwrap();
        let path = tmp("ens.bin");
        write_ensemble_dump(&ens, &path).unwrap();
        let back = read_ensemble_dump(&path).unwrap();
        assert_eq!(ens.values, back.values);
        assert_eq!(ens.beta, back.beta);
        assert_eq!(ens.diff_sq, back.diff_sq);
        assert_eq!(ens.jump_marks, back.jump_marks);
        assert_eq!(ens.seed, back.seed);
        assert_eq!(ens.grid, back.grid);
    }
}
