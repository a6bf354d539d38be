//! Preconditioned conjugate gradients and restarted flexible GMRES.
//!
//! Operators and preconditioners are closures writing into an output slice, so
//! callers can wrap block operators without building a matrix.

use super::csr::{axpy, dot, norm2};
use super::SolverError;

/// Settings of a Krylov solve. Convergence means `||b - A x|| <= rel_tol ||b||`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovConfig {
    pub rel_tol: f64,
    pub max_iterations: usize,
    /// Krylov basis size before a restart (FGMRES only).
    pub restart: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig { rel_tol: 1e-8, max_iterations: 1000, restart: 200 }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KrylovReport {
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    /// Residual norm estimate after each iteration, starting with the initial one.
    pub history: Vec<f64>,
}

/// Preconditioned CG for symmetric positive definite operators, started from zero.
pub fn cg<A, P>(a: A, precond: P, b: &[f64], cfg: &KrylovConfig) -> Result<(Vec<f64>, KrylovReport), SolverError>
where
    A: Fn(&[f64], &mut [f64]),
    P: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm2(b);
    let mut report = KrylovReport { initial_residual: bnorm, final_residual: bnorm, history: vec![bnorm], ..Default::default() };
    if bnorm == 0.0 {
        return Ok((x, report));
    }
    let target = cfg.rel_tol * bnorm;
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=cfg.max_iterations {
        a(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(SolverError::Breakdown(format!("CG curvature {pap} at iteration {it}")));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rn = norm2(&r);
        report.iterations = it;
        report.final_residual = rn;
        report.history.push(rn);
        if rn <= target {
            return Ok((x, report));
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(SolverError::NotConverged { iterations: report.iterations, residual: report.final_residual, best: x })
}

/// Right-preconditioned restarted flexible GMRES.
///
/// The preconditioner may change between iterations and may fail; its error
/// aborts the solve. On budget exhaustion the best iterate is returned inside
/// the error.
pub fn fgmres<A, P>(
    a: A,
    mut precond: P,
    b: &[f64],
    x0: Option<&[f64]>,
    cfg: &KrylovConfig,
) -> Result<(Vec<f64>, KrylovReport), SolverError>
where
    A: Fn(&[f64], &mut [f64]),
    P: FnMut(&[f64], &mut [f64]) -> Result<(), SolverError>,
{
    let n = b.len();
    let m = cfg.restart.max(1);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let bnorm = norm2(b);
    let mut r = vec![0.0; n];
    residual(&a, b, &x, &mut r);
    let mut beta = norm2(&r);
    let mut report =
        KrylovReport { initial_residual: beta, final_residual: beta, history: vec![beta], ..Default::default() };
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        report.final_residual = 0.0;
        return Ok((x, report));
    }
    let target = cfg.rel_tol * bnorm;
    if beta <= target {
        return Ok((x, report));
    }

    let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut h = vec![vec![0.0; m]; m + 1];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    let mut w = vec![0.0; n];

    while report.iterations < cfg.max_iterations {
        v.clear();
        z.clear();
        v.push(r.iter().map(|ri| ri / beta).collect());
        g.iter_mut().for_each(|gi| *gi = 0.0);
        g[0] = beta;
        let mut k = 0;
        while k < m && report.iterations < cfg.max_iterations {
            let mut zk = vec![0.0; n];
            precond(&v[k], &mut zk)?;
            a(&zk, &mut w);
            z.push(zk);
            for i in 0..=k {
                let hik = dot(&w, &v[i]);
                h[i][k] = hik;
                axpy(-hik, &v[i], &mut w);
            }
            let hn = norm2(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            if d == 0.0 {
                return Err(SolverError::Breakdown("singular Hessenberg column".into()));
            }
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k += 1;
            report.iterations += 1;
            let est = g[k].abs();
            report.history.push(est);
            if est <= target || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wi| wi / hn).collect());
        }
        // back substitution for the least-squares coefficients
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (yi, zi) in y.iter().zip(&z) {
            axpy(*yi, zi, &mut x);
        }
        residual(&a, b, &x, &mut r);
        beta = norm2(&r);
        report.final_residual = beta;
        if beta <= target {
            return Ok((x, report));
        }
    }
    Err(SolverError::NotConverged { iterations: report.iterations, residual: report.final_residual, best: x })
}

fn residual<A: Fn(&[f64], &mut [f64])>(a: &A, b: &[f64], x: &[f64], r: &mut [f64]) {
    a(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}
