//! File output: legacy VTK fields, centerline profiles, convergence tables and
//! per-cycle statistics.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::amr::CycleReport;
use crate::assembly::SolutionState;
use crate::discretization::Discretization;
use crate::error::{invalid, Error, Result};
use crate::problems::{ErrorNorms, Profile};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Writes the field at cell corners as a legacy ASCII unstructured grid of quads.
pub fn write_vtk<W: Write>(disc: &Discretization, state: &SolutionState, mut out: W) -> Result<()> {
    let mesh = &disc.mesh;
    let corners: Vec<usize> = {
        // a vertex of the mesh is used when it is a corner of some active cell
        let mut used = vec![false; mesh.n_vertices()];
        for &c in mesh.active_cells() {
            for v in mesh.cell(c).vertices {
                used[v] = true;
            }
        }
        (0..mesh.n_vertices()).filter(|&v| used[v]).collect()
    };
    let mut index = vec![usize::MAX; mesh.n_vertices()];
    for (i, &v) in corners.iter().enumerate() {
        index[v] = i;
    }
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "flow solution")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", corners.len())?;
    for &v in &corners {
        let p = mesh.vertex(v);
        writeln!(out, "{} {} 0", p[0], p[1])?;
    }
    let n = mesh.n_active();
    writeln!(out, "CELLS {} {}", n, 5 * n)?;
    for &c in mesh.active_cells() {
        let v = mesh.cell(c).vertices.map(|v| index[v]);
        writeln!(out, "4 {} {} {} {}", v[0], v[1], v[2], v[3])?;
    }
    writeln!(out, "CELL_TYPES {n}")?;
    for _ in 0..n {
        writeln!(out, "9")?;
    }
    writeln!(out, "POINT_DATA {}", corners.len())?;
    writeln!(out, "VECTORS velocity double")?;
    let mut pressure = Vec::with_capacity(corners.len());
    for &v in &corners {
        let p = mesh.vertex(v);
        let u = disc.evaluate_velocity(&state.u, p)?;
        writeln!(out, "{} {} 0", u[0], u[1])?;
        pressure.push(disc.evaluate_pressure(&state.p, p)?);
    }
    writeln!(out, "SCALARS pressure double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for p in pressure {
        writeln!(out, "{p}")?;
    }
    Ok(())
}

pub fn write_vtk_file(disc: &Discretization, state: &SolutionState, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_vtk(disc, state, &mut w)?;
    w.flush()?;
    Ok(())
}

/// `coord,<column>` CSV of one profile.
pub fn write_profile<W: Write>(profile: &Profile, column: &str, mut out: W) -> Result<()> {
    writeln!(out, "coord,{column}")?;
    for (c, v) in profile.coords.iter().zip(&profile.values) {
        writeln!(out, "{c},{v}")?;
    }
    Ok(())
}

/// Writes `centerline_u_x.csv` and `centerline_u_y.csv` into `dir`.
pub fn write_centerlines(u_x: &Profile, u_y: &Profile, dir: &Path) -> Result<()> {
    for (p, col, name) in [(u_x, "u_x", "centerline_u_x.csv"), (u_y, "u_y", "centerline_u_y.csv")] {
        let mut w = create(&dir.join(name))?;
        write_profile(p, col, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

/// Parses a two-column profile CSV written by [`write_profile`].
pub fn read_profile(text: &str) -> Result<Profile> {
    let mut lines = text.lines();
    lines.next().ok_or_else(|| Error::Parse("empty profile file".into()))?;
    let mut p = Profile { coords: Vec::new(), values: Vec::new() };
    for line in lines {
        let (a, b) = line.split_once(',').ok_or_else(|| Error::Parse(format!("bad row `{line}`")))?;
        p.coords.push(a.parse().map_err(|e| Error::Parse(format!("{e}")))?);
        p.values.push(b.parse().map_err(|e| Error::Parse(format!("{e}")))?);
    }
    Ok(p)
}

/// One mesh of a convergence study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub dofs: usize,
    pub errors: ErrorNorms,
}

/// Convergence table with reduction factors `error(previous) / error(current)`.
pub fn write_convergence_table<W: Write>(rows: &[ConvergenceRow], mut out: W) -> Result<()> {
    if rows.len() < 2 {
        return invalid("a convergence table needs at least two rows");
    }
    writeln!(out, "DoFs,L2_u,rate_L2_u,H1_u,rate_H1_u,L2_p,rate_L2_p")?;
    for (i, r) in rows.iter().enumerate() {
        let e = r.errors;
        if i == 0 {
            writeln!(out, "{},{},,{},,{},", r.dofs, e.l2_u, e.h1_u, e.l2_p)?;
        } else {
            let p = rows[i - 1].errors;
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.dofs,
                e.l2_u,
                p.l2_u / e.l2_u,
                e.h1_u,
                p.h1_u / e.h1_u,
                e.l2_p,
                p.l2_p / e.l2_p
            )?;
        }
    }
    Ok(())
}

pub fn write_convergence_file(rows: &[ConvergenceRow], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_convergence_table(rows, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Per-cycle statistics; deliberately free of timings so reruns are byte-identical.
pub fn write_cycle_table<W: Write>(cycles: &[CycleReport], mut out: W) -> Result<()> {
    writeln!(out, "cycle,active_cells,dofs,velocity_dofs,pressure_dofs,newton_iterations,fgmres_total,final_residual")?;
    for c in cycles {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{:e}",
            c.cycle,
            c.active_cells,
            c.dofs(),
            c.velocity_dofs,
            c.pressure_dofs,
            c.newton.iterations,
            c.newton.fgmres_total(),
            c.newton.final_residual()
        )?;
    }
    Ok(())
}

pub fn write_cycle_file(cycles: &[CycleReport], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_cycle_table(cycles, &mut w)?;
    w.flush()?;
    Ok(())
}
