//! Assembly of the Newton linear system and the nonlinear residual.
//!
//! For a state `(u, p)` the Newton system is
//!
//! ```text
//! [ A_gamma  B^T ] [du]   [rhs_u]
//! [ B        0   ] [dp] = [rhs_p]
//! ```
//!
//! with `A_gamma = M + C + N + S + gamma L`, `B_qj = -(psi_q, div phi_j)` and the
//! right-hand side equal to minus the weak residual.

use crate::discretization::{expand, Discretization, ElementTables};
use crate::dofs::ConstraintSet;
use crate::error::{invalid, Result};
use crate::sparse::{norm2, CsrMatrix};

/// Forcing term of the momentum equation.
pub type Forcing = dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync;

/// Below this speed the directional part of the Forchheimer Jacobian is dropped.
pub const FORCHHEIMER_SPEED_FLOOR: f64 = 1e-12;

/// Quadrature points per direction for all assembled forms.
pub const ASSEMBLY_QUADRATURE: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelVariant {
    /// Viscous and Darcy terms only; linear.
    Brinkman,
    /// Adds convection.
    DarcyBrinkman,
    /// Adds the Forchheimer drag.
    Dbf,
    /// Convection and viscosity only.
    NavierStokes,
}

impl ModelVariant {
    pub fn has_convection(self) -> bool {
        !matches!(self, ModelVariant::Brinkman)
    }

    pub fn has_darcy(self) -> bool {
        !matches!(self, ModelVariant::NavierStokes)
    }

    pub fn has_forchheimer(self) -> bool {
        matches!(self, ModelVariant::Dbf)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Brinkman => "brinkman",
            ModelVariant::DarcyBrinkman => "darcy-brinkman",
            ModelVariant::Dbf => "dbf",
            ModelVariant::NavierStokes => "navier-stokes",
        }
    }
}

impl std::str::FromStr for ModelVariant {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brinkman" => Ok(ModelVariant::Brinkman),
            "darcy-brinkman" => Ok(ModelVariant::DarcyBrinkman),
            "dbf" => Ok(ModelVariant::Dbf),
            "navier-stokes" => Ok(ModelVariant::NavierStokes),
            _ => invalid(format!("unknown model `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub re: f64,
    pub da: f64,
    pub cf: f64,
    pub gamma: f64,
    pub variant: ModelVariant,
}

impl ModelParams {
    pub fn new(variant: ModelVariant, re: f64, da: f64, cf: f64, gamma: f64) -> Result<Self> {
        let p = ModelParams { re, da, cf, gamma, variant };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite();
        if !(ok(self.re) && self.re > 0.0) {
            return invalid(format!("Re must be positive, got {}", self.re));
        }
        if !(ok(self.da) && self.da > 0.0) {
            return invalid(format!("Da must be positive, got {}", self.da));
        }
        if !(ok(self.cf) && self.cf >= 0.0) {
            return invalid(format!("c_F must be nonnegative, got {}", self.cf));
        }
        if !(ok(self.gamma) && self.gamma >= 0.0) {
            return invalid(format!("gamma must be nonnegative, got {}", self.gamma));
        }
        Ok(())
    }

    pub fn with_variant(self, variant: ModelVariant) -> Self {
        ModelParams { variant, ..self }
    }

    pub fn viscosity(&self) -> f64 {
        1.0 / self.re
    }

    /// Darcy drag coefficient, zero when the variant drops it.
    pub fn darcy_coefficient(&self) -> f64 {
        if self.variant.has_darcy() {
            1.0 / (self.re * self.da)
        } else {
            0.0
        }
    }

    /// Forchheimer coefficient, zero when the variant drops it.
    pub fn forchheimer_coefficient(&self) -> f64 {
        if self.variant.has_forchheimer() {
            self.cf / self.da.sqrt()
        } else {
            0.0
        }
    }
}

/// Velocity and pressure coefficients plus Newton bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionState {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub residual_norm: f64,
    pub newton_iterations: usize,
}

impl SolutionState {
    pub fn zeros(disc: &Discretization) -> Self {
        SolutionState {
            u: vec![0.0; disc.n_velocity()],
            p: vec![0.0; disc.n_pressure()],
            residual_norm: f64::NAN,
            newton_iterations: 0,
        }
    }

    /// Zero interior velocity and pressure with the Dirichlet data imposed.
    pub fn with_boundary_data(disc: &Discretization) -> Self {
        let mut s = Self::zeros(disc);
        disc.state_constraints.velocity.distribute(&mut s.u);
        s
    }

    fn check(&self, disc: &Discretization) -> Result<()> {
        if self.u.len() != disc.n_velocity() || self.p.len() != disc.n_pressure() {
            return invalid("state vector lengths do not match the discretization");
        }
        if self.u.iter().chain(&self.p).any(|v| v.is_nan()) {
            return invalid("state contains NaN");
        }
        Ok(())
    }
}

/// The assembled Newton system of one iteration.
#[derive(Clone, Debug)]
pub struct BlockSystem {
    pub a_gamma: CsrMatrix,
    pub b: CsrMatrix,
    pub bt: CsrMatrix,
    pub m_p: CsrMatrix,
    pub rhs_u: Vec<f64>,
    pub rhs_p: Vec<f64>,
    /// Constrained pressure rows: the operator acts as `scale * x` on them.
    pub pressure_diagonal: Vec<(usize, f64)>,
}

impl BlockSystem {
    pub fn n_velocity(&self) -> usize {
        self.rhs_u.len()
    }

    pub fn n_pressure(&self) -> usize {
        self.rhs_p.len()
    }

    /// `[y_u; y_p] = K [x_u; x_p]`.
    pub fn apply(&self, x_u: &[f64], x_p: &[f64], y_u: &mut [f64], y_p: &mut [f64]) {
        self.a_gamma.matvec(x_u, y_u);
        self.bt.matvec_add(1.0, x_p, y_u);
        self.b.matvec(x_u, y_p);
        for &(d, s) in &self.pressure_diagonal {
            y_p[d] += s * x_p[d];
        }
    }
}

/// Local matrices and vectors of one cell.
struct CellTerms {
    a: [[f64; 18]; 18],
    b: [[f64; 18]; 4],
    mp: [[f64; 4]; 4],
    ru: [f64; 18],
    rp: [f64; 4],
}

impl CellTerms {
    fn new() -> Self {
        CellTerms { a: [[0.0; 18]; 18], b: [[0.0; 18]; 4], mp: [[0.0; 4]; 4], ru: [0.0; 18], rp: [0.0; 4] }
    }
}

/// Integrates the cell contributions; matrices only when `with_matrix`.
#[allow(clippy::too_many_arguments)]
fn cell_terms(
    t: &ElementTables,
    origin: [f64; 2],
    h: f64,
    ul: &[f64; 18],
    pl: &[f64; 4],
    params: &ModelParams,
    forcing: Option<&Forcing>,
    with_matrix: bool,
    out: &mut CellTerms,
) {
    let nu = params.viscosity();
    let sigma = params.darcy_coefficient();
    let beta = params.forchheimer_coefficient();
    let gamma = params.gamma;
    let conv = params.variant.has_convection();
    *out = CellTerms::new();
    for q in 0..t.rule.len() {
        let jxw = t.rule.weights[q] * h * h;
        let xi = t.rule.points[q];
        let n = t.q2.values_at(q);
        let g: [[f64; 2]; 9] = std::array::from_fn(|a| {
            let r = t.q2.grad(q, a);
            [r[0] / h, r[1] / h]
        });
        let psi = t.q1.values_at(q);

        let mut u = [0.0; 2];
        let mut gu = [[0.0; 2]; 2];
        for a in 0..9 {
            for c in 0..2 {
                let v = ul[c * 9 + a];
                u[c] += v * n[a];
                gu[c][0] += v * g[a][0];
                gu[c][1] += v * g[a][1];
            }
        }
        let p: f64 = (0..4).map(|k| pl[k] * psi[k]).sum();
        let div = gu[0][0] + gu[1][1];
        let speed = (u[0] * u[0] + u[1] * u[1]).sqrt();
        let conv_u = if conv {
            [u[0] * gu[0][0] + u[1] * gu[0][1], u[0] * gu[1][0] + u[1] * gu[1][1]]
        } else {
            [0.0; 2]
        };
        let f = forcing.map_or([0.0; 2], |f| f([origin[0] + h * xi[0], origin[1] + h * xi[1]]));

        for ci in 0..2 {
            let drag = sigma * u[ci] + beta * speed * u[ci];
            for a in 0..9 {
                let i = ci * 9 + a;
                let r = conv_u[ci] * n[a] - p * g[a][ci]
                    + nu * (gu[ci][0] * g[a][0] + gu[ci][1] * g[a][1])
                    + drag * n[a]
                    + gamma * div * g[a][ci]
                    - f[ci] * n[a];
                out.ru[i] -= r * jxw;
            }
        }
        for k in 0..4 {
            out.rp[k] += div * psi[k] * jxw;
        }
        if !with_matrix {
            continue;
        }

        let directional = beta != 0.0 && speed >= FORCHHEIMER_SPEED_FLOOR;
        for ai in 0..9 {
            let (ni, gi) = (n[ai], g[ai]);
            for aj in 0..9 {
                let (nj, gj) = (n[aj], g[aj]);
                let lap = nu * (gi[0] * gj[0] + gi[1] * gj[1]);
                let mass = nj * ni;
                let adv = if conv { (u[0] * gj[0] + u[1] * gj[1]) * ni } else { 0.0 };
                let diag = lap + (sigma + beta * speed) * mass + adv;
                for ci in 0..2 {
                    for cj in 0..2 {
                        let mut v = gamma * gj[cj] * gi[ci];
                        if ci == cj {
                            v += diag;
                        }
                        if conv {
                            v += nj * gu[ci][cj] * ni;
                        }
                        if directional {
                            v += beta * u[ci] * u[cj] / speed * mass;
                        }
                        out.a[ci * 9 + ai][cj * 9 + aj] += v * jxw;
                    }
                }
            }
        }
        for k in 0..4 {
            for aj in 0..9 {
                for cj in 0..2 {
                    out.b[k][cj * 9 + aj] -= psi[k] * g[aj][cj] * jxw;
                }
            }
            for l in 0..4 {
                out.mp[k][l] += psi[k] * psi[l] * jxw;
            }
        }
    }
}

/// Scatters a local matrix into a global one, condensing constrained rows and columns.
fn distribute_matrix<const R: usize, const C: usize>(
    global: &mut CsrMatrix,
    rhs: &mut [f64],
    local: &[[f64; C]; R],
    rows: &[Vec<(usize, f64)>; R],
    cols: &[(Vec<(usize, f64)>, f64); C],
) {
    for (i, row) in local.iter().enumerate() {
        for (j, &k) in row.iter().enumerate() {
            if k == 0.0 {
                continue;
            }
            let (ref cexp, inh) = cols[j];
            for &(r, wr) in &rows[i] {
                for &(c, wc) in cexp {
                    global.add_to(r, c, wr * wc * k);
                }
                if inh != 0.0 {
                    rhs[r] -= wr * k * inh;
                }
            }
        }
    }
}

fn expansions<const N: usize>(dofs: &[usize; N], cs: &ConstraintSet) -> [Vec<(usize, f64)>; N] {
    std::array::from_fn(|i| expand(dofs[i], cs))
}

fn col_expansions<const N: usize>(dofs: &[usize; N], cs: &ConstraintSet) -> [(Vec<(usize, f64)>, f64); N] {
    std::array::from_fn(|i| (expand(dofs[i], cs), cs.get(dofs[i]).map_or(0.0, |l| l.inhomogeneity)))
}

/// Mean absolute diagonal over unconstrained rows; 1 if there is none.
fn diagonal_scale(m: &CsrMatrix, cs: &ConstraintSet) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for i in 0..m.nrows() {
        if !cs.is_constrained(i) {
            s += m.get(i, i).abs();
            n += 1;
        }
    }
    if n == 0 || s == 0.0 {
        1.0
    } else {
        s / n as f64
    }
}

/// Removes the component of `r` along the pressure weights, making the
/// continuity residual orthogonal to constants.
fn project_pressure_residual(disc: &Discretization, r: &mut [f64]) {
    let w = &disc.pressure_weights;
    let sw: f64 = w.iter().sum();
    if sw == 0.0 {
        return;
    }
    let s: f64 = r.iter().sum();
    let c = s / sw;
    for (ri, wi) in r.iter_mut().zip(w) {
        *ri -= c * wi;
    }
}

/// Assembles the Newton system at `state` with homogeneous update constraints.
pub fn assemble_newton_system(
    disc: &Discretization,
    state: &SolutionState,
    params: &ModelParams,
    forcing: Option<&Forcing>,
) -> Result<BlockSystem> {
    params.validate()?;
    state.check(disc)?;
    let tables = ElementTables::new(ASSEMBLY_QUADRATURE)?;
    let uc = &disc.update_constraints.velocity;
    let pc = &disc.update_constraints.pressure;
    let mut a = disc.a_pattern.clone();
    let mut b = disc.b_pattern.clone();
    let mut mp = disc.mp_pattern.clone();
    let mut rhs_u = vec![0.0; disc.n_velocity()];
    let mut rhs_p = vec![0.0; disc.n_pressure()];
    let mut terms = CellTerms::new();
    let mut scratch = vec![0.0; disc.n_pressure()];

    for &cell in disc.mesh.active_cells() {
        let key = disc.mesh.cell(cell).key;
        let ud = disc.dofs.cell_velocity_dofs(cell);
        let pd = disc.dofs.cell_pressure_dofs(cell);
        let ul = disc.local_velocity(&state.u, cell);
        let pl = disc.local_pressure(&state.p, cell);
        cell_terms(&tables, key.origin(), key.side(), &ul, &pl, params, forcing, true, &mut terms);

        let urows = expansions(&ud, uc);
        let prows = expansions(&pd, pc);
        let ucols = col_expansions(&ud, uc);
        let pcols = col_expansions(&pd, pc);
        distribute_matrix(&mut a, &mut rhs_u, &terms.a, &urows, &ucols);
        distribute_matrix(&mut b, &mut rhs_p, &terms.b, &prows, &ucols);
        distribute_matrix(&mut mp, &mut scratch, &terms.mp, &prows, &pcols);
        for (i, e) in urows.iter().enumerate() {
            for &(r, w) in e {
                rhs_u[r] += w * terms.ru[i];
            }
        }
        for (k, e) in prows.iter().enumerate() {
            for &(r, w) in e {
                rhs_p[r] += w * terms.rp[k];
            }
        }
    }

    let sa = diagonal_scale(&a, uc);
    for (d, line) in uc.iter() {
        a.add_to(d, d, sa);
        rhs_u[d] = if line.entries.is_empty() { sa * line.inhomogeneity } else { 0.0 };
    }
    let sm = diagonal_scale(&mp, pc);
    let mut pressure_diagonal = Vec::with_capacity(pc.len());
    for (d, _) in pc.iter() {
        mp.add_to(d, d, sm);
        rhs_p[d] = 0.0;
        pressure_diagonal.push((d, sm));
    }
    project_pressure_residual(disc, &mut rhs_p);
    let bt = b.transpose();
    Ok(BlockSystem { a_gamma: a, b, bt, m_p: mp, rhs_u, rhs_p, pressure_diagonal })
}

/// Condensed weak residual `F(u, p)` (velocity part then pressure part) and its
/// Euclidean norm; constrained entries are zero.
pub fn assemble_residual(
    disc: &Discretization,
    state: &SolutionState,
    params: &ModelParams,
    forcing: Option<&Forcing>,
) -> Result<(Vec<f64>, f64)> {
    params.validate()?;
    state.check(disc)?;
    let tables = ElementTables::new(ASSEMBLY_QUADRATURE)?;
    let uc = &disc.update_constraints.velocity;
    let pc = &disc.update_constraints.pressure;
    let nu = disc.n_velocity();
    let mut r = vec![0.0; nu + disc.n_pressure()];
    let mut terms = CellTerms::new();
    for &cell in disc.mesh.active_cells() {
        let key = disc.mesh.cell(cell).key;
        let ud = disc.dofs.cell_velocity_dofs(cell);
        let pd = disc.dofs.cell_pressure_dofs(cell);
        let ul = disc.local_velocity(&state.u, cell);
        let pl = disc.local_pressure(&state.p, cell);
        cell_terms(&tables, key.origin(), key.side(), &ul, &pl, params, forcing, false, &mut terms);
        for (i, &d) in ud.iter().enumerate() {
            for (m, w) in expand(d, uc) {
                r[m] -= w * terms.ru[i];
            }
        }
        for (k, &d) in pd.iter().enumerate() {
            for (m, w) in expand(d, pc) {
                r[nu + m] -= w * terms.rp[k];
            }
        }
    }
    uc.set_zero(&mut r[..nu]);
    pc.set_zero(&mut r[nu..]);
    project_pressure_residual(disc, &mut r[nu..]);
    let norm = norm2(&r);
    Ok((r, norm))
}

/// `||div u_h||` in L2.
pub fn divergence_l2(disc: &Discretization, u: &[f64]) -> Result<f64> {
    if u.len() != disc.n_velocity() {
        return invalid("velocity vector length does not match the discretization");
    }
    let t = ElementTables::new(ASSEMBLY_QUADRATURE)?;
    let mut s = 0.0;
    for &cell in disc.mesh.active_cells() {
        let h = disc.mesh.cell_side(cell);
        let ul = disc.local_velocity(u, cell);
        for q in 0..t.rule.len() {
            let mut div = 0.0;
            for a in 0..9 {
                let g = t.q2.grad(q, a);
                div += (ul[a] * g[0] + ul[9 + a] * g[1]) / h;
            }
            s += div * div * t.rule.weights[q] * h * h;
        }
    }
    Ok(s.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;

    #[test]
    fn forchheimer_block_is_diag_two_one_for_unit_x_velocity() {
        let t = ElementTables::new(1).unwrap();
        let params = ModelParams::new(ModelVariant::Dbf, 1.0, 1.0, 1.0, 0.0).unwrap();
        let mut ul = [0.0; 18];
        ul[..9].fill(1.0);
        let mut with = CellTerms::new();
        cell_terms(&t, [0.0, 0.0], 1.0, &ul, &[0.0; 4], &params, None, true, &mut with);
        let mut without = CellTerms::new();
        let db = params.with_variant(ModelVariant::DarcyBrinkman);
        cell_terms(&t, [0.0, 0.0], 1.0, &ul, &[0.0; 4], &db, None, true, &mut without);
        // one point at the centre: S = beta [|u| mass + u u^T / |u| mass] = diag(2, 1) mass
        let n = t.q2.values_at(0);
        for ai in 0..9 {
            for aj in 0..9 {
                let m = n[ai] * n[aj];
                let sxx = with.a[ai][aj] - without.a[ai][aj];
                let syy = with.a[9 + ai][9 + aj] - without.a[9 + ai][9 + aj];
                let sxy = with.a[ai][9 + aj] - without.a[ai][9 + aj];
                assert!((sxx - 2.0 * m).abs() < 1e-14);
                assert!((syy - m).abs() < 1e-14);
                assert!(sxy.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn divergence_free_linear_field() {
        let d = Discretization::new(Mesh::uniform(2).unwrap(), &|_, _| [0.0, 0.0]).unwrap();
        let mut u = vec![0.0; d.n_velocity()];
        for (n, p) in d.dofs.q2_points().iter().enumerate() {
            u[2 * n] = p[0];
            u[2 * n + 1] = -p[1];
        }
        assert!(divergence_l2(&d, &u).unwrap() < 1e-13);
        assert_eq!(divergence_l2(&d, &vec![0.0; d.n_velocity()]).unwrap(), 0.0);
    }

    #[test]
    fn rejects_nan_state() {
        let d = Discretization::new(Mesh::uniform(1).unwrap(), &|_, _| [0.0, 0.0]).unwrap();
        let mut s = SolutionState::zeros(&d);
        s.p[0] = f64::NAN;
        let params = ModelParams::new(ModelVariant::Brinkman, 1.0, 1.0, 0.0, 1.0).unwrap();
        assert!(assemble_newton_system(&d, &s, &params, None).is_err());
        assert!(assemble_residual(&d, &s, &params, None).is_err());
    }
}
