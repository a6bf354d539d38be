//! A mesh together with its dof numbering, constraints and cached sparsity patterns.

use crate::dofs::{
    dirichlet_constraints, hanging_node_constraints, ConstraintSet, DofHandler, FieldConstraints,
};
use crate::elements::{QuadratureRule, ReferenceElement, Tabulation};
use crate::error::{invalid, Result};
use crate::mesh::{BoundaryMarker, CellId, Mesh};
use crate::sparse::{CsrMatrix, PatternBuilder};

/// Velocity boundary data as a function of boundary part and point.
pub type BoundaryData = dyn Fn(BoundaryMarker, [f64; 2]) -> [f64; 2] + Send + Sync;

/// Q2 and Q1 shape tables on a tensor Gauss rule.
#[derive(Clone, Debug)]
pub struct ElementTables {
    pub rule: QuadratureRule,
    pub q2: Tabulation,
    pub q1: Tabulation,
}

impl ElementTables {
    pub fn new(q: usize) -> Result<Self> {
        let rule = QuadratureRule::gauss(q)?;
        let q2 = ReferenceElement::q2().tabulate(&rule.points);
        let q1 = ReferenceElement::q1().tabulate(&rule.points);
        Ok(ElementTables { rule, q2, q1 })
    }
}

#[derive(Clone, Debug)]
pub struct Discretization {
    pub mesh: Mesh,
    pub dofs: DofHandler,
    /// Hanging-node constraints only.
    pub hanging: FieldConstraints,
    /// Hanging nodes plus the Dirichlet data; the constraints a state satisfies.
    pub state_constraints: FieldConstraints,
    /// Hanging nodes plus homogeneous Dirichlet data; the constraints of a Newton update.
    pub update_constraints: FieldConstraints,
    /// Integral of each pressure basis function, condensed onto unconstrained dofs.
    pub pressure_weights: Vec<f64>,
    pub(crate) a_pattern: CsrMatrix,
    pub(crate) b_pattern: CsrMatrix,
    pub(crate) mp_pattern: CsrMatrix,
}

impl Discretization {
    pub fn new(mesh: Mesh, boundary: &BoundaryData) -> Result<Self> {
        let dofs = DofHandler::new(&mesh);
        let hanging = hanging_node_constraints(&mesh, &dofs)?;
        let dirichlet = dirichlet_constraints(&dofs, boundary);

        let mut vel = dirichlet.clone();
        vel.merge(&hanging.velocity);
        vel.close()?;
        let state_constraints = FieldConstraints { velocity: vel, pressure: hanging.pressure.clone() };
        let update_constraints = state_constraints.homogenized();

        let nu = dofs.n_velocity_dofs();
        let np = dofs.n_pressure_dofs();
        let uc = &update_constraints.velocity;
        let pc = &update_constraints.pressure;
        let mut pa = PatternBuilder::new(nu, nu);
        let mut pb = PatternBuilder::new(np, nu);
        let mut pm = PatternBuilder::new(np, np);
        for &cell in mesh.active_cells() {
            let ud: Vec<usize> = expand_all(&dofs.cell_velocity_dofs(cell), uc);
            let pd: Vec<usize> = expand_all(&dofs.cell_pressure_dofs(cell), pc);
            pa.add_block(&ud, &ud);
            pb.add_block(&pd, &ud);
            pm.add_block(&pd, &pd);
        }
        for (d, _) in uc.iter() {
            pa.add(d, d);
        }
        for (d, _) in pc.iter() {
            pm.add(d, d);
        }

        let tables = ElementTables::new(2)?;
        let mut pressure_weights = vec![0.0; np];
        for &cell in mesh.active_cells() {
            let h = mesh.cell_side(cell);
            let pd = dofs.cell_pressure_dofs(cell);
            for (i, &d) in pd.iter().enumerate() {
                let w: f64 = (0..tables.rule.len()).map(|q| tables.rule.weights[q] * tables.q1.value(q, i)).sum();
                for (m, wm) in expand(d, pc) {
                    pressure_weights[m] += wm * w * h * h;
                }
            }
        }

        Ok(Discretization {
            mesh,
            dofs,
            hanging,
            state_constraints,
            update_constraints,
            pressure_weights,
            a_pattern: pa.build(),
            b_pattern: pb.build(),
            mp_pattern: pm.build(),
        })
    }

    pub fn n_velocity(&self) -> usize {
        self.dofs.n_velocity_dofs()
    }

    pub fn n_pressure(&self) -> usize {
        self.dofs.n_pressure_dofs()
    }

    /// Local velocity coefficients of a cell, index `c * 9 + a`.
    pub fn local_velocity(&self, u: &[f64], cell: CellId) -> [f64; 18] {
        self.dofs.cell_velocity_dofs(cell).map(|d| u[d])
    }

    pub fn local_pressure(&self, p: &[f64], cell: CellId) -> [f64; 4] {
        self.dofs.cell_pressure_dofs(cell).map(|d| p[d])
    }

    fn reference_point(&self, cell: CellId, point: [f64; 2]) -> [f64; 2] {
        let o = self.mesh.cell(cell).key.origin();
        let h = self.mesh.cell_side(cell);
        [((point[0] - o[0]) / h).clamp(0.0, 1.0), ((point[1] - o[1]) / h).clamp(0.0, 1.0)]
    }

    /// Velocity of the finite element field at a point.
    pub fn evaluate_velocity(&self, u: &[f64], point: [f64; 2]) -> Result<[f64; 2]> {
        if u.len() != self.n_velocity() {
            return invalid("velocity vector length does not match the dof handler");
        }
        let cell = self.mesh.locate(point)?;
        let xi = self.reference_point(cell, point);
        let loc = self.local_velocity(u, cell);
        let e = ReferenceElement::q2();
        let mut v = [0.0; 2];
        for a in 0..9 {
            let s = e.shape_value(a, xi)?;
            v[0] += loc[a] * s;
            v[1] += loc[9 + a] * s;
        }
        Ok(v)
    }

    pub fn evaluate_pressure(&self, p: &[f64], point: [f64; 2]) -> Result<f64> {
        if p.len() != self.n_pressure() {
            return invalid("pressure vector length does not match the dof handler");
        }
        let cell = self.mesh.locate(point)?;
        let xi = self.reference_point(cell, point);
        let loc = self.local_pressure(p, cell);
        let e = ReferenceElement::q1();
        let mut v = 0.0;
        for (k, l) in loc.iter().enumerate() {
            v += l * e.shape_value(k, xi)?;
        }
        Ok(v)
    }

    /// Integral of the pressure field over the unit square.
    pub fn pressure_mean(&self, p: &[f64]) -> f64 {
        let pc = &self.update_constraints.pressure;
        p.iter()
            .zip(&self.pressure_weights)
            .enumerate()
            .filter(|(i, _)| !pc.is_constrained(*i))
            .map(|(_, (a, b))| a * b)
            .sum()
    }

    /// Shifts a pressure vector (with distributed constraints) to zero mean.
    pub fn remove_pressure_mean(&self, p: &mut [f64]) {
        let m = self.pressure_mean(p);
        p.iter_mut().for_each(|v| *v -= m);
    }
}

/// Unconstrained dofs a dof is distributed to, with weights.
pub(crate) fn expand(d: usize, cs: &ConstraintSet) -> Vec<(usize, f64)> {
    match cs.get(d) {
        Some(line) => line.entries.clone(),
        None => vec![(d, 1.0)],
    }
}

fn expand_all(dofs: &[usize], cs: &ConstraintSet) -> Vec<usize> {
    let mut v: Vec<usize> = dofs.iter().flat_map(|&d| expand(d, cs).into_iter().map(|(m, _)| m)).collect();
    v.sort_unstable();
    v.dedup();
    v
}
