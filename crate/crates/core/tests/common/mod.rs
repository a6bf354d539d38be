#![allow(dead_code)]

use dbf_core::assembly::{assemble_newton_system, assemble_residual, ModelParams, SolutionState};
use dbf_core::discretization::Discretization;
use dbf_core::mesh::Mesh;
use dbf_core::nonlinear::{initial_guess, newton_solve_strict, NewtonConfig, NewtonReport};
use dbf_core::problems::Problem;
use dbf_core::sparse::norm2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Converged solve on the uniform mesh with `2^n x 2^n` cells.
pub fn solve_uniform(
    problem: &Problem,
    params: &ModelParams,
    n: u8,
    cfg: &NewtonConfig,
) -> dbf_core::Result<(Discretization, SolutionState, NewtonReport)> {
    let disc = Discretization::new(Mesh::uniform(n)?, problem.boundary())?;
    let start = initial_guess(&disc, params, problem.forcing(), cfg)?;
    let out = newton_solve_strict(&disc, params, problem.forcing(), start, cfg)?;
    Ok((disc, out.state, out.report))
}

/// Random state satisfying the Dirichlet and hanging-node constraints.
pub fn random_state(disc: &Discretization, rng: &mut ChaCha8Rng) -> SolutionState {
    let mut s = SolutionState::zeros(disc);
    s.u.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    s.p.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    disc.state_constraints.velocity.distribute(&mut s.u);
    disc.state_constraints.pressure.distribute(&mut s.p);
    s
}

/// Random direction satisfying the homogeneous update constraints.
pub fn random_direction(disc: &Discretization, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let mut wu: Vec<f64> = (0..disc.n_velocity()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut wp: Vec<f64> = (0..disc.n_pressure()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    disc.update_constraints.velocity.distribute(&mut wu);
    disc.update_constraints.pressure.distribute(&mut wp);
    (wu, wp)
}

/// Relative errors `||(R(x + t w) - R(x)) / t - J w|| / ||J w||` over unconstrained
/// rows, where `R` is the assembled residual and `J` the assembled Newton matrix.
pub fn jacobian_fd_errors(
    disc: &Discretization,
    params: &ModelParams,
    state: &SolutionState,
    w: &(Vec<f64>, Vec<f64>),
    steps: &[f64],
) -> dbf_core::Result<Vec<f64>> {
    let nu = disc.n_velocity();
    let sys = assemble_newton_system(disc, state, params, None)?;
    let mut ju = vec![0.0; nu];
    let mut jp = vec![0.0; disc.n_pressure()];
    sys.apply(&w.0, &w.1, &mut ju, &mut jp);
    let umask = disc.update_constraints.velocity.mask(nu);
    let pmask = disc.update_constraints.pressure.mask(disc.n_pressure());
    jp.iter_mut().zip(&pmask).filter(|(_, &k)| k).for_each(|(v, _)| *v = 0.0);
    let m = &disc.pressure_weights;
    let c = jp.iter().sum::<f64>() / m.iter().sum::<f64>();
    jp.iter_mut().zip(m).for_each(|(j, mi)| *j -= c * mi);
    let mut jw: Vec<f64> = ju.into_iter().zip(&umask).map(|(v, &k)| if k { 0.0 } else { v }).collect();
    jw.extend(jp);
    let jnorm = norm2(&jw);

    let (r0, _) = assemble_residual(disc, state, params, None)?;
    let mut errors = Vec::with_capacity(steps.len());
    for &t in steps {
        let mut moved = state.clone();
        moved.u.iter_mut().zip(&w.0).for_each(|(x, d)| *x += t * d);
        moved.p.iter_mut().zip(&w.1).for_each(|(x, d)| *x += t * d);
        let (rt, _) = assemble_residual(disc, &moved, params, None)?;
        let diff: Vec<f64> = rt.iter().zip(&r0).zip(&jw).map(|((a, b), j)| (a - b) / t - j).collect();
        errors.push(norm2(&diff) / jnorm);
    }
    Ok(errors)
}

/// Mesh from `uniform(start)` after `steps` rounds of refining a few random cells.
pub fn random_mesh(rng: &mut ChaCha8Rng, start: u8, steps: usize, max_level: u8) -> Mesh {
    let mut mesh = Mesh::uniform(start).unwrap();
    for _ in 0..steps {
        let active = mesh.active_cells();
        let k = rng.gen_range(1..=3.min(active.len()));
        let mut flags: Vec<_> = (0..k).map(|_| active[rng.gen_range(0..active.len())]).collect();
        flags.retain(|&c| mesh.cell(c).level() < max_level);
        flags.sort_unstable();
        flags.dedup();
        mesh = mesh.refine_and_coarsen(&flags, &[]).unwrap();
    }
    mesh
}

/// Velocity of an active cell's local polynomial at a point of its closure.
pub fn cell_velocity(disc: &Discretization, u: &[f64], cell: usize, p: [f64; 2]) -> [f64; 2] {
    let el = dbf_core::elements::ReferenceElement::q2();
    let o = disc.mesh.cell(cell).key.origin();
    let h = disc.mesh.cell_side(cell);
    let xi = [(p[0] - o[0]) / h, (p[1] - o[1]) / h];
    let dofs = disc.dofs.cell_velocity_dofs(cell);
    let mut v = [0.0; 2];
    for a in 0..9 {
        let phi = el.shape_value(a, xi).unwrap();
        v[0] += u[dofs[a]] * phi;
        v[1] += u[dofs[9 + a]] * phi;
    }
    v
}

/// Pressure of an active cell's local polynomial at a point of its closure.
pub fn cell_pressure(disc: &Discretization, p: &[f64], cell: usize, x: [f64; 2]) -> f64 {
    let el = dbf_core::elements::ReferenceElement::q1();
    let o = disc.mesh.cell(cell).key.origin();
    let h = disc.mesh.cell_side(cell);
    let xi = [(x[0] - o[0]) / h, (x[1] - o[1]) / h];
    let dofs = disc.dofs.cell_pressure_dofs(cell);
    (0..4).map(|a| p[dofs[a]] * el.shape_value(a, xi).unwrap()).sum()
}

/// Largest mismatch of the velocity and pressure traces across interior faces,
/// sampled at five points per face.
pub fn max_trace_jump(disc: &Discretization, u: &[f64], p: &[f64]) -> f64 {
    use dbf_core::mesh::FaceNeighbor;
    let mesh = &disc.mesh;
    let mut worst: f64 = 0.0;
    for &c in mesh.active_cells() {
        let [v0, _, v2, _] = mesh.cell_vertices(c);
        for face in 0..4 {
            if matches!(mesh.neighbor(c, face), FaceNeighbor::Boundary(_)) {
                continue;
            }
            for t in [0.0, 0.2, 0.5, 0.7, 1.0] {
                let x = match face {
                    0 => [v0[0], v0[1] + t * (v2[1] - v0[1])],
                    1 => [v2[0], v0[1] + t * (v2[1] - v0[1])],
                    2 => [v0[0] + t * (v2[0] - v0[0]), v0[1]],
                    _ => [v0[0] + t * (v2[0] - v0[0]), v2[1]],
                };
                let others: Vec<usize> = match mesh.neighbor(c, face) {
                    FaceNeighbor::Same(n) | FaceNeighbor::Coarser { cell: n, .. } => vec![n],
                    FaceNeighbor::Finer(pair) => pair
                        .into_iter()
                        .filter(|&n| {
                            let [a, _, b, _] = mesh.cell_vertices(n);
                            (a[0]..=b[0]).contains(&x[0]) && (a[1]..=b[1]).contains(&x[1])
                        })
                        .collect(),
                    FaceNeighbor::Boundary(_) => unreachable!(),
                };
                let mine = cell_velocity(disc, u, c, x);
                let pm = cell_pressure(disc, p, c, x);
                for n in others {
                    let theirs = cell_velocity(disc, u, n, x);
                    worst = worst.max((mine[0] - theirs[0]).abs()).max((mine[1] - theirs[1]).abs());
                    worst = worst.max((pm - cell_pressure(disc, p, n, x)).abs());
                }
            }
        }
    }
    worst
}

/// Largest violation of a constraint set by a vector.
pub fn constraint_violation(c: &dbf_core::dofs::ConstraintSet, x: &[f64]) -> f64 {
    c.iter()
        .map(|(d, l)| (x[d] - l.entries.iter().map(|&(m, w)| w * x[m]).sum::<f64>() - l.inhomogeneity).abs())
        .fold(0.0, f64::max)
}
