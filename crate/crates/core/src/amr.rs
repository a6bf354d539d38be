//! Kelly error indicator, fixed-fraction marking, solution transfer and the
//! adaptive solve loop.

use std::time::Instant;

use log::info;

use crate::assembly::{ModelParams, SolutionState};
use crate::discretization::Discretization;
use crate::elements::{gauss_legendre, ReferenceElement};
use crate::error::{invalid, Result};
use crate::mesh::{face_is_vertical, face_normal, CellId, FaceNeighbor, Mesh};
use crate::nonlinear::{initial_guess, newton_solve_strict, NewtonConfig, NewtonReport};
use crate::problems::Problem;

/// Velocity gradient of the finite element field inside `cell` at a physical point.
fn cell_gradient(disc: &Discretization, ul: &[f64; 18], cell: CellId, point: [f64; 2]) -> [[f64; 2]; 2] {
    let key = disc.mesh.cell(cell).key;
    let (o, h) = (key.origin(), key.side());
    let xi = [(point[0] - o[0]) / h, (point[1] - o[1]) / h];
    let e = ReferenceElement::q2();
    let mut g = [[0.0; 2]; 2];
    for a in 0..9 {
        let r = e.shape_gradient(a, xi).expect("index in range");
        for c in 0..2 {
            g[c][0] += ul[c * 9 + a] * r[0] / h;
            g[c][1] += ul[c * 9 + a] * r[1] / h;
        }
    }
    g
}

/// Endpoints of face `face` of a cell.
fn face_segment(mesh: &Mesh, cell: CellId, face: usize) -> ([f64; 2], [f64; 2]) {
    let key = mesh.cell(cell).key;
    let (o, h) = (key.origin(), key.side());
    match face {
        0 => ([o[0], o[1]], [o[0], o[1] + h]),
        1 => ([o[0] + h, o[1]], [o[0] + h, o[1] + h]),
        2 => ([o[0], o[1]], [o[0] + h, o[1]]),
        _ => ([o[0], o[1] + h], [o[0] + h, o[1] + h]),
    }
}

/// Kelly indicator `eta_K` of every active cell (in active-cell order).
///
/// `eta_K^2 = h_K / 24 * sum over faces of the integral of the squared jump of
/// the normal derivative, summed over both velocity components`, with `h_K`
/// the cell side. Boundary faces contribute nothing.
pub fn kelly_indicator(disc: &Discretization, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != disc.n_velocity() {
        return invalid("velocity vector length does not match the discretization");
    }
    let (gx, gw) = gauss_legendre(3)?;
    let mesh = &disc.mesh;
    let mut eta = Vec::with_capacity(mesh.n_active());
    for &cell in mesh.active_cells() {
        let ul = disc.local_velocity(u, cell);
        let mut sum = 0.0;
        for face in 0..4 {
            let n = face_normal(face);
            let parts: Vec<(CellId, CellId)> = match mesh.neighbor(cell, face) {
                FaceNeighbor::Boundary(_) => continue,
                FaceNeighbor::Same(nb) | FaceNeighbor::Coarser { cell: nb, .. } => vec![(cell, nb)],
                FaceNeighbor::Finer(pair) => pair.iter().map(|&c| (c, c)).collect(),
            };
            for (seg_cell, nb) in parts {
                let seg_face = if seg_cell == cell { face } else { crate::mesh::opposite_face(face) };
                let (a, b) = face_segment(mesh, seg_cell, seg_face);
                let len = if face_is_vertical(face) { b[1] - a[1] } else { b[0] - a[0] };
                let nl = disc.local_velocity(u, nb);
                for (t, w) in gx.iter().zip(&gw) {
                    let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                    let gi = cell_gradient(disc, &ul, cell, p);
                    let ge = cell_gradient(disc, &nl, nb, p);
                    for c in 0..2 {
                        let j = (gi[c][0] - ge[c][0]) * n[0] + (gi[c][1] - ge[c][1]) * n[1];
                        sum += w * len * j * j;
                    }
                }
            }
        }
        eta.push((mesh.cell_side(cell) / 24.0 * sum).sqrt());
    }
    Ok(eta)
}

/// Cells to refine (largest indicators) and coarsen (smallest), ties broken by
/// ascending cell id. `cells[i]` is the id of the cell with indicator `eta[i]`.
pub fn mark_cells(
    eta: &[f64],
    cells: &[CellId],
    refine_fraction: f64,
    coarsen_fraction: f64,
) -> Result<(Vec<CellId>, Vec<CellId>)> {
    if eta.len() != cells.len() {
        return invalid("indicator and cell lists differ in length");
    }
    if eta.iter().any(|e| !e.is_finite() || *e < 0.0) {
        return invalid("indicators must be finite and nonnegative");
    }
    let n = eta.len();
    let n_ref = ((refine_fraction * n as f64).ceil() as usize).min(n);
    let n_coarse = (coarsen_fraction * n as f64).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eta[j].total_cmp(&eta[i]).then(cells[i].cmp(&cells[j])));
    let mut refine: Vec<CellId> = order[..n_ref].iter().map(|&i| cells[i]).collect();
    let refined: std::collections::HashSet<CellId> = refine.iter().copied().collect();
    order.sort_by(|&i, &j| eta[i].total_cmp(&eta[j]).then(cells[i].cmp(&cells[j])));
    let mut coarsen: Vec<CellId> =
        order.iter().map(|&i| cells[i]).filter(|c| !refined.contains(c)).take(n_coarse).collect();
    refine.sort_unstable();
    coarsen.sort_unstable();
    Ok((refine, coarsen))
}

/// Moves a state to a mesh obtained from the old one by one adaptation step.
///
/// New node values are point values of the old (continuous) field, which copies
/// unchanged cells, embeds refined ones exactly and interpolates coarsened ones.
/// The new mesh's constraints are applied afterwards and the pressure is
/// shifted to zero mean.
pub fn transfer_solution(old: &Discretization, state: &SolutionState, new: &Discretization) -> Result<SolutionState> {
    if state.u.len() != old.n_velocity() || state.p.len() != old.n_pressure() {
        return invalid("state does not belong to the old discretization");
    }
    for &c in new.mesh.active_cells() {
        let key = new.mesh.cell(c).key;
        let related = match old.mesh.cell_by_key(&key) {
            Some(oc) => match old.mesh.cell(oc).children {
                None => true,
                Some(ch) => ch.iter().all(|&k| old.mesh.cell(k).active),
            },
            None => key.parent().and_then(|p| old.mesh.cell_by_key(&p)).is_some_and(|p| old.mesh.cell(p).active),
        };
        if !related {
            return invalid(format!("cell {key:?} is not one adaptation step away from the old mesh"));
        }
    }
    let mut out = SolutionState::zeros(new);
    for (n, &p) in new.dofs.q2_points().iter().enumerate() {
        let v = old.evaluate_velocity(&state.u, p)?;
        out.u[2 * n] = v[0];
        out.u[2 * n + 1] = v[1];
    }
    for (n, &p) in new.dofs.q1_points().iter().enumerate() {
        out.p[n] = old.evaluate_pressure(&state.p, p)?;
    }
    new.state_constraints.velocity.distribute(&mut out.u);
    new.state_constraints.pressure.distribute(&mut out.p);
    new.remove_pressure_mean(&mut out.p);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmrConfig {
    pub global_refines: u8,
    pub cycles: usize,
    pub refine_fraction: f64,
    pub coarsen_fraction: f64,
    pub newton: NewtonConfig,
}

impl Default for AmrConfig {
    fn default() -> Self {
        AmrConfig {
            global_refines: 5,
            cycles: 4,
            refine_fraction: 0.30,
            coarsen_fraction: 0.03,
            newton: NewtonConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CycleReport {
    pub cycle: usize,
    pub active_cells: usize,
    pub velocity_dofs: usize,
    pub pressure_dofs: usize,
    pub newton: NewtonReport,
    pub seconds: f64,
}

impl CycleReport {
    pub fn dofs(&self) -> usize {
        self.velocity_dofs + self.pressure_dofs
    }
}

pub struct AmrOutcome {
    pub discretization: Discretization,
    pub state: SolutionState,
    pub cycles: Vec<CycleReport>,
}

/// Solves on the uniform mesh, then adapts and re-solves `cfg.cycles` times.
///
/// `on_cycle` is called after every cycle, e.g. for logging.
pub fn amr_loop(
    problem: &Problem,
    params: &ModelParams,
    cfg: &AmrConfig,
    mut on_cycle: impl FnMut(&CycleReport),
) -> Result<AmrOutcome> {
    params.validate()?;
    let forcing = problem.forcing();
    let mut disc = Discretization::new(Mesh::uniform(cfg.global_refines)?, problem.boundary())?;
    let mut state: Option<SolutionState> = None;
    let mut cycles = Vec::with_capacity(cfg.cycles + 1);
    for cycle in 0..=cfg.cycles {
        let start = Instant::now();
        let ncfg = NewtonConfig { cycle, ..cfg.newton };
        let initial = match state.take() {
            None => initial_guess(&disc, params, forcing, &ncfg)?,
            Some(prev) => {
                let eta = kelly_indicator(&disc, &prev.u)?;
                let (r, c) = mark_cells(&eta, disc.mesh.active_cells(), cfg.refine_fraction, cfg.coarsen_fraction)?;
                let mesh = disc.mesh.refine_and_coarsen(&r, &c)?;
                let next = Discretization::new(mesh, problem.boundary())?;
                let moved = transfer_solution(&disc, &prev, &next)?;
                disc = next;
                moved
            }
        };
        let outcome = newton_solve_strict(&disc, params, forcing, initial, &ncfg)?;
        let report = CycleReport {
            cycle,
            active_cells: disc.mesh.n_active(),
            velocity_dofs: disc.n_velocity(),
            pressure_dofs: disc.n_pressure(),
            newton: outcome.report,
            seconds: start.elapsed().as_secs_f64(),
        };
        info!(
            "cycle={} active_cells={} dofs={} newton_iterations={} fgmres_total={} seconds={:.1}",
            cycle,
            report.active_cells,
            report.dofs(),
            report.newton.iterations,
            report.newton.fgmres_total(),
            report.seconds
        );
        on_cycle(&report);
        cycles.push(report);
        state = Some(outcome.state);
    }
    Ok(AmrOutcome { discretization: disc, state: state.expect("at least one cycle"), cycles })
}
