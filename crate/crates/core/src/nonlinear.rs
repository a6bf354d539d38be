//! Newton iteration with a fixed unit step and the initial-guess strategies.

use log::{info, warn};

use crate::assembly::{assemble_newton_system, assemble_residual, Forcing, ModelParams, ModelVariant, SolutionState};
use crate::discretization::Discretization;
use crate::error::{Error, Result};
use crate::saddle::{solve_newton_step, LinearSolverConfig, LuCache};
use crate::sparse::{axpy, SolverError};

/// Reynolds numbers of the continuation ladder used before high-Re Navier-Stokes solves.
pub const REYNOLDS_LADDER: [f64; 2] = [100.0, 500.0];

/// Cold-started convective solves above this Reynolds number start from the ladder.
pub const CONTINUATION_THRESHOLD: f64 = 600.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Abort when one step multiplies the residual by more than this.
    pub divergence_factor: f64,
    pub linear: LinearSolverConfig,
    /// Adaptive cycle number, only used in log lines.
    pub cycle: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tolerance: 1e-12,
            max_iterations: 30,
            divergence_factor: 10.0,
            linear: LinearSolverConfig::default(),
            cycle: 0,
        }
    }
}

/// Why a Newton run stopped without converging.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum NewtonFailure {
    #[error("FGMRES exceeded its budget of {iterations} iterations (residual {residual:.3e})")]
    LinearBudget { iterations: usize, residual: f64 },
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
    #[error("residual grew from {from:.3e} to {to:.3e}")]
    Diverged { from: f64, to: f64 },
    #[error("no convergence in {0} iterations")]
    IterationBudget(usize),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Residual norm of the initial state and after every update.
    pub residual_history: Vec<f64>,
    /// FGMRES iterations of every update.
    pub fgmres_history: Vec<usize>,
    pub converged: bool,
    pub failure: Option<NewtonFailure>,
}

impl NewtonReport {
    pub fn fgmres_total(&self) -> usize {
        self.fgmres_history.iter().sum()
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    /// Final iterate when converged, otherwise the iterate with the smallest residual.
    pub state: SolutionState,
    pub report: NewtonReport,
}

/// Runs Newton's method from `initial`, which must satisfy the Dirichlet data.
pub fn newton_solve(
    disc: &Discretization,
    params: &ModelParams,
    forcing: Option<&Forcing>,
    initial: SolutionState,
    cfg: &NewtonConfig,
) -> Result<NewtonOutcome> {
    let mut state = initial;
    let (_, mut res) = assemble_residual(disc, &state, params, forcing)?;
    let mut report = NewtonReport { residual_history: vec![res], ..Default::default() };
    let mut best = state.clone();
    let mut best_res = res;
    let mut cache = LuCache::new();
    info!("newton cycle={} model={} iteration=0 residual={res:.6e}", cfg.cycle, params.variant.name());

    while res > cfg.tolerance && report.iterations < cfg.max_iterations {
        let system = assemble_newton_system(disc, &state, params, forcing)?;
        let step = match solve_newton_step(disc, &system, params, &cfg.linear, &mut cache) {
            Ok(s) => s,
            Err(Error::Solver(SolverError::NotConverged { iterations, residual, .. })) => {
                report.failure = Some(NewtonFailure::LinearBudget { iterations, residual });
                break;
            }
            Err(e) => {
                report.failure = Some(NewtonFailure::LinearSolve(e.to_string()));
                break;
            }
        };
        drop(system);
        axpy(1.0, &step.du, &mut state.u);
        axpy(1.0, &step.dp, &mut state.p);
        report.iterations += 1;
        report.fgmres_history.push(step.report.iterations);
        let (_, new_res) = assemble_residual(disc, &state, params, forcing)?;
        report.residual_history.push(new_res);
        info!(
            "newton cycle={} model={} iteration={} residual={new_res:.6e} fgmres={}",
            cfg.cycle,
            params.variant.name(),
            report.iterations,
            step.report.iterations
        );
        if !new_res.is_finite() || new_res > cfg.divergence_factor * res {
            report.failure = Some(NewtonFailure::Diverged { from: res, to: new_res });
            break;
        }
        res = new_res;
        if res < best_res {
            best_res = res;
            best = state.clone();
        }
    }
    report.converged = report.failure.is_none() && res <= cfg.tolerance;
    if !report.converged && report.failure.is_none() {
        report.failure = Some(NewtonFailure::IterationBudget(cfg.max_iterations));
    }
    let mut out = if report.converged { state } else { best };
    out.residual_norm = if report.converged { res } else { best_res };
    out.newton_iterations = report.iterations;
    if let Some(f) = &report.failure {
        warn!("newton cycle={} model={} failed: {f}", cfg.cycle, params.variant.name());
    }
    Ok(NewtonOutcome { state: out, report })
}

/// Like [`newton_solve`] but turns a non-converged run into an error.
pub fn newton_solve_strict(
    disc: &Discretization,
    params: &ModelParams,
    forcing: Option<&Forcing>,
    initial: SolutionState,
    cfg: &NewtonConfig,
) -> Result<NewtonOutcome> {
    let out = newton_solve(disc, params, forcing, initial, cfg)?;
    if !out.report.converged {
        let failure = out.report.failure.clone().unwrap_or(NewtonFailure::IterationBudget(cfg.max_iterations));
        return Err(Error::NonConvergence { model: params.variant.name(), failure });
    }
    Ok(out)
}

/// Starting state for a first solve on a mesh.
///
/// The Darcy-Brinkman-Forchheimer model starts from the converged
/// Darcy-Brinkman solution. Convective models above the continuation threshold
/// first walk up the Reynolds ladder; everything else starts from zero
/// interior values with the boundary data imposed.
pub fn initial_guess(
    disc: &Discretization,
    params: &ModelParams,
    forcing: Option<&Forcing>,
    cfg: &NewtonConfig,
) -> Result<SolutionState> {
    match params.variant {
        ModelVariant::Dbf => {
            let db = params.with_variant(ModelVariant::DarcyBrinkman);
            let start = continuation_start(disc, &db, forcing, cfg)?;
            Ok(newton_solve_strict(disc, &db, forcing, start, cfg)?.state)
        }
        _ => continuation_start(disc, params, forcing, cfg),
    }
}

fn continuation_start(
    disc: &Discretization,
    params: &ModelParams,
    forcing: Option<&Forcing>,
    cfg: &NewtonConfig,
) -> Result<SolutionState> {
    let mut state = SolutionState::with_boundary_data(disc);
    if params.variant.has_convection() && params.re > CONTINUATION_THRESHOLD {
        for re in REYNOLDS_LADDER {
            let p = ModelParams { re, ..*params };
            state = newton_solve_strict(disc, &p, forcing, state, cfg)?.state;
        }
    }
    Ok(state)
}
