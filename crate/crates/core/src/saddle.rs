//! Block triangular augmented-Lagrangian preconditioner and the FGMRES solve of
//! one Newton step.
//!
//! The preconditioner inverts
//!
//! ```text
//! P = [ A_gamma  B^T ]
//!     [ 0        S   ]    S = -(nu + gamma)^-1 M_p
//! ```
//!
//! using the sparse LU of `A_gamma` and a Jacobi-preconditioned CG for `M_p`.

use log::debug;

use crate::assembly::{BlockSystem, ModelParams};
use crate::discretization::Discretization;
use crate::error::{Error, Result};
use crate::sparse::{cg, fgmres, CsrMatrix, KrylovConfig, KrylovReport, LuFactorization, LuSymbolic, SolverError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearSolverConfig {
    /// Relative FGMRES tolerance of each Newton step.
    pub rel_tol: f64,
    pub restart: usize,
    pub max_iterations: usize,
    pub mass_rel_tol: f64,
    pub mass_max_iterations: usize,
}

impl Default for LinearSolverConfig {
    fn default() -> Self {
        LinearSolverConfig {
            rel_tol: 1e-4,
            restart: 200,
            max_iterations: 2000,
            mass_rel_tol: 1e-8,
            mass_max_iterations: 1000,
        }
    }
}

pub struct BlockPreconditioner<'a> {
    system: &'a BlockSystem,
    lu: &'a LuFactorization,
    schur_scale: f64,
    inv_diag: Vec<f64>,
    cg: KrylovConfig,
}

impl<'a> BlockPreconditioner<'a> {
    pub fn new(system: &'a BlockSystem, lu: &'a LuFactorization, params: &ModelParams, cfg: &LinearSolverConfig) -> Self {
        let inv_diag = system.m_p.diagonal().iter().map(|d| if *d != 0.0 { 1.0 / d } else { 1.0 }).collect();
        BlockPreconditioner {
            system,
            lu,
            schur_scale: params.viscosity() + params.gamma,
            inv_diag,
            cg: KrylovConfig { rel_tol: cfg.mass_rel_tol, max_iterations: cfg.mass_max_iterations, restart: 0 },
        }
    }

    /// `(z_u, z_p) = P^{-1} (r_u, r_p)`.
    pub fn apply(&self, r_u: &[f64], r_p: &[f64], z_u: &mut [f64], z_p: &mut [f64]) -> Result<(), SolverError> {
        let sys = self.system;
        let mut rp = r_p.to_vec();
        for &(d, _) in &sys.pressure_diagonal {
            rp[d] = 0.0;
        }
        let mp = &sys.m_p;
        let inv = &self.inv_diag;
        let (x, _) = cg(
            |x, y| mp.matvec(x, y),
            |r, z| {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(inv) {
                    *zi = ri * di;
                }
            },
            &rp,
            &self.cg,
        )
        .map_err(|e| SolverError::Preconditioner(format!("pressure mass solve: {e}")))?;
        for (zp, xi) in z_p.iter_mut().zip(&x) {
            *zp = -self.schur_scale * xi;
        }
        for &(d, s) in &sys.pressure_diagonal {
            z_p[d] = r_p[d] / s;
        }
        z_u.copy_from_slice(r_u);
        sys.bt.matvec_add(-1.0, z_p, z_u);
        self.lu.solve_in_place(z_u);
        Ok(())
    }
}

/// Reuses the symbolic analysis of `A_gamma` across matrices with the same
/// pattern and the numeric factors when the values repeat.
#[derive(Default)]
pub struct LuCache {
    symbolic: Option<LuSymbolic>,
    numeric: Option<(Vec<f64>, LuFactorization)>,
    factorizations: usize,
}

impl LuCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of numeric factorizations computed so far.
    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    pub fn factor(&mut self, a: &CsrMatrix) -> Result<&LuFactorization> {
        if !self.symbolic.as_ref().is_some_and(|s| s.matches(a)) {
            self.symbolic = Some(LuSymbolic::analyze(a)?);
            self.numeric = None;
        }
        let reuse = self.numeric.as_ref().is_some_and(|(v, _)| v.as_slice() == a.values());
        if !reuse {
            let lu = self.symbolic.as_ref().expect("analysed above").factorize(a)?;
            self.factorizations += 1;
            self.numeric = Some((a.values().to_vec(), lu));
        }
        Ok(&self.numeric.as_ref().expect("set above").1)
    }
}

/// Newton update with its linear-solve statistics.
#[derive(Clone, Debug)]
pub struct NewtonStep {
    pub du: Vec<f64>,
    pub dp: Vec<f64>,
    pub report: KrylovReport,
}

/// Solves the Newton system with right-preconditioned FGMRES, distributes the
/// update constraints and removes the pressure mean.
pub fn solve_newton_step(
    disc: &Discretization,
    system: &BlockSystem,
    params: &ModelParams,
    cfg: &LinearSolverConfig,
    cache: &mut LuCache,
) -> Result<NewtonStep> {
    let nu = system.n_velocity();
    let lu = cache.factor(&system.a_gamma)?;
    let pre = BlockPreconditioner::new(system, lu, params, cfg);
    let mut b = system.rhs_u.clone();
    b.extend_from_slice(&system.rhs_p);
    let kcfg = KrylovConfig { rel_tol: cfg.rel_tol, max_iterations: cfg.max_iterations, restart: cfg.restart };
    let (x, report) = fgmres(
        |x, y| {
            let (yu, yp) = y.split_at_mut(nu);
            system.apply(&x[..nu], &x[nu..], yu, yp);
        },
        |r, z| {
            let (zu, zp) = z.split_at_mut(nu);
            pre.apply(&r[..nu], &r[nu..], zu, zp)
        },
        &b,
        None,
        &kcfg,
    )
    .map_err(Error::from)?;
    debug!(
        "linear solve: iterations={} initial={:.3e} final={:.3e}",
        report.iterations, report.initial_residual, report.final_residual
    );
    let mut du = x[..nu].to_vec();
    let mut dp = x[nu..].to_vec();
    disc.update_constraints.velocity.distribute(&mut du);
    disc.update_constraints.pressure.distribute(&mut dp);
    disc.remove_pressure_mean(&mut dp);
    Ok(NewtonStep { du, dp, report })
}
