mod common;

use dbf_core::assembly::{assemble_newton_system, assemble_residual, ModelParams, ModelVariant, SolutionState};
use dbf_core::discretization::Discretization;
use dbf_core::mesh::Mesh;
use dbf_core::nonlinear::{initial_guess, newton_solve, newton_solve_strict, NewtonConfig, NewtonFailure, REYNOLDS_LADDER};
use dbf_core::problems::Problem;
use dbf_core::saddle::{solve_newton_step, BlockPreconditioner, LinearSolverConfig, LuCache};
use dbf_core::sparse::{norm2, LuFactorization};
use dbf_core::Error;
use rand::Rng;

fn cavity(n: u8) -> Discretization {
    Discretization::new(Mesh::uniform(n).unwrap(), Problem::cavity().boundary()).unwrap()
}

fn hanging_cavity(seed: u64) -> Discretization {
    let mut rng = common::rng(seed);
    let mesh = common::random_mesh(&mut rng, 2, 4, 5);
    Discretization::new(mesh, Problem::cavity().boundary()).unwrap()
}

fn dbf(re: f64, da: f64) -> ModelParams {
    ModelParams::new(ModelVariant::Dbf, re, da, 0.5, 1.0).unwrap()
}

fn tight() -> NewtonConfig {
    NewtonConfig { linear: LinearSolverConfig { rel_tol: 1e-13, mass_rel_tol: 1e-14, ..LinearSolverConfig::default() }, ..NewtonConfig::default() }
}

fn random_vec(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn preconditioner_is_deterministic_and_triangular() {
    let disc = hanging_cavity(1);
    let p = dbf(100.0, 0.01);
    let mut rng = common::rng(10);
    let state = common::random_state(&disc, &mut rng);
    let sys = assemble_newton_system(&disc, &state, &p, None).unwrap();
    let lu = LuFactorization::new(&sys.a_gamma).unwrap();
    let pre = BlockPreconditioner::new(&sys, &lu, &p, &LinearSolverConfig::default());
    let (nu, np) = (sys.n_velocity(), sys.n_pressure());
    let ru = random_vec(&mut rng, nu);
    let rp = random_vec(&mut rng, np);
    let mut a = (vec![0.0; nu], vec![0.0; np]);
    let mut b = (vec![0.0; nu], vec![0.0; np]);
    pre.apply(&ru, &rp, &mut a.0, &mut a.1).unwrap();
    pre.apply(&ru, &rp, &mut b.0, &mut b.1).unwrap();
    assert_eq!(a.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(a.1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.1.iter().map(|v| v.to_bits()).collect::<Vec<_>>());

    let mut z = (vec![0.0; nu], vec![1.0; np]);
    pre.apply(&ru, &vec![0.0; np], &mut z.0, &mut z.1).unwrap();
    assert!(z.1.iter().all(|&v| v == 0.0));
    assert_eq!(z.0, lu.solve(&ru));
}

#[test]
fn preconditioner_is_linear_with_exact_inner_solves() {
    let disc = cavity(3);
    let p = dbf(10.0, 0.1);
    let mut rng = common::rng(12);
    let state = common::random_state(&disc, &mut rng);
    let sys = assemble_newton_system(&disc, &state, &p, None).unwrap();
    let lu = LuFactorization::new(&sys.a_gamma).unwrap();
    let cfg = LinearSolverConfig { mass_rel_tol: 1e-15, ..LinearSolverConfig::default() };
    let pre = BlockPreconditioner::new(&sys, &lu, &p, &cfg);
    let (nu, np) = (sys.n_velocity(), sys.n_pressure());
    let apply = |ru: &[f64], rp: &[f64]| {
        let mut z = (vec![0.0; nu], vec![0.0; np]);
        pre.apply(ru, rp, &mut z.0, &mut z.1).unwrap();
        [z.0, z.1].concat()
    };
    let (u1, p1, u2, p2) = (random_vec(&mut rng, nu), random_vec(&mut rng, np), random_vec(&mut rng, nu), random_vec(&mut rng, np));
    let s = 2.5;
    let comb = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| s * x + y).collect::<Vec<_>>();
    let lhs = apply(&comb(&u1, &u2), &comb(&p1, &p2));
    let rhs = comb(&apply(&u1, &p1), &apply(&u2, &p2));
    let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    assert!(norm2(&diff) <= 1e-10 * norm2(&rhs));
}

#[test]
fn stokes_single_cell_converges_quickly() {
    let disc = cavity(0);
    let p = ModelParams::new(ModelVariant::Brinkman, 1.0, 1e12, 0.0, 1.0).unwrap();
    let sys = assemble_newton_system(&disc, &SolutionState::with_boundary_data(&disc), &p, None).unwrap();
    assert_eq!(sys.n_velocity() + sys.n_pressure(), 22);
    let cfg = LinearSolverConfig { rel_tol: 1e-10, ..LinearSolverConfig::default() };
    let step = solve_newton_step(&disc, &sys, &p, &cfg, &mut LuCache::new()).unwrap();
    assert!(step.report.iterations <= 5, "{} iterations", step.report.iterations);
}

#[test]
fn stokes_limit_on_a_larger_mesh() {
    let disc = cavity(4);
    let p = ModelParams::new(ModelVariant::Brinkman, 1.0, 1e12, 0.0, 1.0).unwrap();
    let sys = assemble_newton_system(&disc, &SolutionState::with_boundary_data(&disc), &p, None).unwrap();
    let cfg = LinearSolverConfig { rel_tol: 1e-8, ..LinearSolverConfig::default() };
    let step = solve_newton_step(&disc, &sys, &p, &cfg, &mut LuCache::new()).unwrap();
    assert!(step.report.iterations <= 40, "{} iterations", step.report.iterations);
}

#[test]
fn decoupled_system_needs_one_iteration() {
    let disc = cavity(2);
    let p = dbf(10.0, 0.1);
    let mut sys = assemble_newton_system(&disc, &SolutionState::with_boundary_data(&disc), &p, None).unwrap();
    sys.b.values_mut().iter_mut().for_each(|v| *v = 0.0);
    sys.bt.values_mut().iter_mut().for_each(|v| *v = 0.0);
    sys.rhs_p.iter_mut().for_each(|v| *v = 0.0);
    let cfg = LinearSolverConfig { rel_tol: 1e-10, ..LinearSolverConfig::default() };
    let step = solve_newton_step(&disc, &sys, &p, &cfg, &mut LuCache::new()).unwrap();
    assert_eq!(step.report.iterations, 1);
}

#[test]
fn zero_right_hand_side() {
    let disc = hanging_cavity(2);
    let p = dbf(100.0, 0.01);
    let mut sys = assemble_newton_system(&disc, &SolutionState::with_boundary_data(&disc), &p, None).unwrap();
    sys.rhs_u.iter_mut().for_each(|v| *v = 0.0);
    sys.rhs_p.iter_mut().for_each(|v| *v = 0.0);
    let step = solve_newton_step(&disc, &sys, &p, &LinearSolverConfig::default(), &mut LuCache::new()).unwrap();
    assert!(step.report.iterations <= 1);
    assert!(step.du.iter().chain(&step.dp).all(|&v| v == 0.0));
}

#[test]
fn pressure_update_has_zero_mean_and_constant_shifts_are_invisible() {
    let disc = hanging_cavity(3);
    let p = dbf(100.0, 0.01);
    let mut rng = common::rng(30);
    let state = common::random_state(&disc, &mut rng);
    let sys = assemble_newton_system(&disc, &state, &p, None).unwrap();
    let step = solve_newton_step(&disc, &sys, &p, &LinearSolverConfig::default(), &mut LuCache::new()).unwrap();
    assert!(disc.pressure_mean(&step.dp).abs() <= 1e-12);

    // a constant pressure is in the kernel of B^T on unconstrained velocity rows
    let nu = sys.n_velocity();
    let mut ones = vec![1.0; disc.n_pressure()];
    disc.update_constraints.pressure.distribute(&mut ones);
    let mut y = vec![0.0; nu];
    sys.bt.matvec(&ones, &mut y);
    let worst = (0..nu).filter(|&d| !disc.update_constraints.velocity.is_constrained(d)).map(|d| y[d].abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-13, "{worst}");
}

#[test]
fn first_step_iterations_are_nearly_mesh_independent() {
    let p = ModelParams::new(ModelVariant::DarcyBrinkman, 100.0, 2.5e-3, 0.5, 1.0).unwrap();
    let mut counts = Vec::new();
    for n in 3..=5u8 {
        let disc = cavity(n);
        let sys = assemble_newton_system(&disc, &SolutionState::with_boundary_data(&disc), &p, None).unwrap();
        let step = solve_newton_step(&disc, &sys, &p, &LinearSolverConfig::default(), &mut LuCache::new()).unwrap();
        counts.push(step.report.iterations as f64);
    }
    assert!(counts[1] < 2.0 * counts[0] && counts[2] < 2.0 * counts[1], "{counts:?}");
}

#[test]
fn iterates_keep_dirichlet_data_exactly() {
    let disc = hanging_cavity(4);
    let p = dbf(100.0, 0.01);
    let mut state = SolutionState::with_boundary_data(&disc);
    let dirichlet: Vec<(usize, f64)> = disc
        .state_constraints
        .velocity
        .iter()
        .filter(|(_, l)| l.entries.is_empty())
        .map(|(d, l)| (d, l.inhomogeneity))
        .collect();
    assert!(!dirichlet.is_empty());
    let mut cache = LuCache::new();
    for _ in 0..4 {
        let sys = assemble_newton_system(&disc, &state, &p, None).unwrap();
        let step = solve_newton_step(&disc, &sys, &p, &LinearSolverConfig::default(), &mut cache).unwrap();
        state.u.iter_mut().zip(&step.du).for_each(|(u, d)| *u += d);
        state.p.iter_mut().zip(&step.dp).for_each(|(q, d)| *q += d);
        for &(d, g) in &dirichlet {
            assert!((state.u[d] - g).abs() <= 1e-14, "dof {d}: {} vs {g}", state.u[d]);
        }
        assert!(common::constraint_violation(&disc.state_constraints.velocity, &state.u) <= 1e-14);
    }
}

#[test]
fn brinkman_second_update_vanishes() {
    let disc = hanging_cavity(5);
    let p = ModelParams::new(ModelVariant::Brinkman, 10.0, 2.5e-3, 0.5, 1.0).unwrap();
    let cfg = tight();
    let mut state = SolutionState::with_boundary_data(&disc);
    let mut cache = LuCache::new();
    let mut norms = Vec::new();
    for _ in 0..2 {
        let sys = assemble_newton_system(&disc, &state, &p, None).unwrap();
        let step = solve_newton_step(&disc, &sys, &p, &cfg.linear, &mut cache).unwrap();
        norms.push(norm2(&[step.du.clone(), step.dp.clone()].concat()));
        state.u.iter_mut().zip(&step.du).for_each(|(u, d)| *u += d);
        state.p.iter_mut().zip(&step.dp).for_each(|(q, d)| *q += d);
    }
    assert!(norms[1] <= 1e-10 * norms[0], "{norms:?}");
}

#[test]
fn brinkman_from_rest_converges_in_few_iterations() {
    let disc = cavity(3);
    let p = ModelParams::new(ModelVariant::Brinkman, 10.0, 2.5e-3, 0.5, 1.0).unwrap();
    let start = initial_guess(&disc, &p, None, &NewtonConfig::default()).unwrap();
    assert_eq!(start.u, SolutionState::with_boundary_data(&disc).u);
    let (_, r0) = assemble_residual(&disc, &start, &p, None).unwrap();
    let out = newton_solve_strict(&disc, &p, None, start, &tight()).unwrap();
    assert_eq!(out.report.residual_history[0], r0);
    assert!(out.report.iterations <= 3, "{:?}", out.report.residual_history);
}

#[test]
fn converged_runs_have_monotone_finite_tails() {
    let cases = [
        (ModelVariant::Brinkman, 10.0, 2.5e-4),
        (ModelVariant::DarcyBrinkman, 100.0, 2.5e-3),
        (ModelVariant::Dbf, 100.0, 2.5e-3),
        (ModelVariant::NavierStokes, 100.0, 1.0),
    ];
    for (variant, re, da) in cases {
        let disc = hanging_cavity(6);
        let p = ModelParams::new(variant, re, da, 0.5, 1.0).unwrap();
        let cfg = NewtonConfig::default();
        let start = initial_guess(&disc, &p, None, &cfg).unwrap();
        let out = newton_solve_strict(&disc, &p, None, start, &cfg).unwrap();
        let h = &out.report.residual_history;
        assert!(out.report.converged);
        assert!(h.iter().all(|r| r.is_finite()));
        assert!(*h.last().unwrap() <= cfg.tolerance);
        assert_eq!(h.len(), out.report.iterations + 1);
        assert_eq!(out.report.fgmres_history.len(), out.report.iterations);
        let tail = &h[h.len().saturating_sub(3)..];
        assert!(tail.windows(2).all(|w| w[1] < w[0]), "{variant:?}: {h:?}");
    }
}

#[test]
fn quadratic_tail_at_re_100() {
    let disc = cavity(4);
    let p = dbf(100.0, 2.5e-3);
    let cfg = tight();
    let start = initial_guess(&disc, &p, None, &cfg).unwrap();
    // restart from a coarser state so the tail has several steps
    let mut far = start.clone();
    far.u.iter_mut().zip(&SolutionState::with_boundary_data(&disc).u).for_each(|(u, b)| *u = 0.5 * (*u + b));
    let out = newton_solve_strict(&disc, &p, None, far, &cfg).unwrap();
    let h = &out.report.residual_history;
    assert!(h.len() >= 4, "{h:?}");
    let n = h.len();
    let floor = 1e-14;
    for k in [n - 3, n - 2] {
        assert!(h[k + 1] <= 1e3 * h[k] * h[k] + floor, "r[{}] = {:e} after r[{k}] = {:e} (history {h:?})", k + 1, h[k + 1], h[k]);
    }
}

#[test]
fn dbf_starts_from_the_darcy_brinkman_solution() {
    let disc = cavity(3);
    let p = dbf(10.0, 2.5e-4);
    let cfg = NewtonConfig::default();
    let guess = initial_guess(&disc, &p, None, &cfg).unwrap();
    let db = p.with_variant(ModelVariant::DarcyBrinkman);
    let direct = newton_solve_strict(&disc, &db, None, SolutionState::with_boundary_data(&disc), &cfg).unwrap();
    assert_eq!(guess.u, direct.state.u);
    assert_eq!(guess.p, direct.state.p);
}

#[test]
fn navier_stokes_walks_the_reynolds_ladder() {
    let disc = cavity(3);
    let cfg = NewtonConfig::default();
    let p = ModelParams::new(ModelVariant::NavierStokes, 1000.0, 1.0, 0.5, 1.0).unwrap();
    let guess = initial_guess(&disc, &p, None, &cfg).unwrap();
    let mut manual = SolutionState::with_boundary_data(&disc);
    for re in REYNOLDS_LADDER {
        let q = ModelParams { re, ..p };
        manual = newton_solve_strict(&disc, &q, None, manual, &cfg).unwrap().state;
    }
    assert_eq!(REYNOLDS_LADDER.last(), Some(&500.0));
    assert_eq!(guess.u, manual.u);
    let low = ModelParams { re: 400.0, ..p };
    assert_eq!(initial_guess(&disc, &low, None, &cfg).unwrap().u, SolutionState::with_boundary_data(&disc).u);
}

#[test]
fn failures_are_reported() {
    let disc = cavity(2);
    let p = dbf(100.0, 0.01);
    let cfg = NewtonConfig { max_iterations: 1, ..NewtonConfig::default() };
    let start = SolutionState::with_boundary_data(&disc);
    let out = newton_solve(&disc, &p.with_variant(ModelVariant::DarcyBrinkman), None, start.clone(), &cfg).unwrap();
    assert!(!out.report.converged);
    assert_eq!(out.report.failure, Some(NewtonFailure::IterationBudget(1)));
    assert_eq!(out.state.residual_norm, out.report.residual_history.iter().copied().fold(f64::INFINITY, f64::min));

    let cfg = NewtonConfig { linear: LinearSolverConfig { max_iterations: 1, restart: 1, ..LinearSolverConfig::default() }, ..NewtonConfig::default() };
    match newton_solve_strict(&disc, &p.with_variant(ModelVariant::DarcyBrinkman), None, start, &cfg) {
        Err(Error::NonConvergence { failure: NewtonFailure::LinearBudget { iterations: 1, .. }, .. }) => {}
        other => panic!("expected a linear budget failure, got {other:?}"),
    }
}
