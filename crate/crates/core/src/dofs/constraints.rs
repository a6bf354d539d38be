use std::collections::BTreeMap;

use super::{DofHandler, Q1_FACE_NODES, Q2_FACE_NODES};
use crate::error::{invalid, Result};
use crate::mesh::{opposite_face, BoundaryMarker, FaceNeighbor, Mesh};

/// `x[dof] = sum(weight * x[master]) + inhomogeneity`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintLine {
    pub entries: Vec<(usize, f64)>,
    pub inhomogeneity: f64,
}

/// Affine constraints on a vector of unknowns.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintSet {
    lines: BTreeMap<usize, ConstraintLine>,
    closed: bool,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces the line of `dof`.
    pub fn set_line(&mut self, dof: usize, entries: Vec<(usize, f64)>, inhomogeneity: f64) {
        self.lines.insert(dof, ConstraintLine { entries, inhomogeneity });
        self.closed = false;
    }

    /// Adds the lines of `other` for dofs not already constrained here.
    pub fn merge(&mut self, other: &ConstraintSet) {
        for (&d, line) in &other.lines {
            self.lines.entry(d).or_insert_with(|| line.clone());
        }
        self.closed = false;
    }

    /// Resolves chains so that no line references a constrained dof.
    pub fn close(&mut self) -> Result<()> {
        let dofs: Vec<usize> = self.lines.keys().copied().collect();
        let max_passes = dofs.len() + 1;
        for _ in 0..max_passes {
            let mut changed = false;
            for &d in &dofs {
                let line = &self.lines[&d];
                if !line.entries.iter().any(|(m, _)| self.lines.contains_key(m)) {
                    continue;
                }
                let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
                let mut inh = line.inhomogeneity;
                for &(m, w) in &line.entries {
                    if m == d {
                        return invalid(format!("constraint of dof {d} references itself"));
                    }
                    match self.lines.get(&m) {
                        Some(ml) => {
                            inh += w * ml.inhomogeneity;
                            for &(mm, ww) in &ml.entries {
                                *acc.entry(mm).or_default() += w * ww;
                            }
                        }
                        None => *acc.entry(m).or_default() += w,
                    }
                }
                let entries = acc.into_iter().filter(|&(_, w)| w != 0.0).collect();
                self.lines.insert(d, ConstraintLine { entries, inhomogeneity: inh });
                changed = true;
            }
            if !changed {
                self.closed = true;
                return Ok(());
            }
        }
        invalid("constraint chains contain a cycle")
    }

    pub fn is_closed(&self) -> bool {
        self.closed || self.lines.is_empty()
    }

    pub fn get(&self, dof: usize) -> Option<&ConstraintLine> {
        self.lines.get(&dof)
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.lines.contains_key(&dof)
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &ConstraintLine)> {
        self.lines.iter().map(|(&d, l)| (d, l))
    }

    /// Copy with all inhomogeneities set to zero.
    pub fn homogenized(&self) -> ConstraintSet {
        let mut c = self.clone();
        for l in c.lines.values_mut() {
            l.inhomogeneity = 0.0;
        }
        c
    }

    /// Overwrites constrained entries from their masters.
    pub fn distribute(&self, x: &mut [f64]) {
        debug_assert!(self.is_closed());
        for (&d, line) in &self.lines {
            x[d] = line.entries.iter().map(|&(m, w)| w * x[m]).sum::<f64>() + line.inhomogeneity;
        }
    }

    pub fn set_zero(&self, x: &mut [f64]) {
        for &d in self.lines.keys() {
            x[d] = 0.0;
        }
    }

    /// Boolean mask of constrained dofs.
    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &d in self.lines.keys() {
            m[d] = true;
        }
        m
    }
}

/// Constraints of the velocity and pressure fields.
#[derive(Clone, Debug, Default)]
pub struct FieldConstraints {
    pub velocity: ConstraintSet,
    pub pressure: ConstraintSet,
}

impl FieldConstraints {
    pub fn homogenized(&self) -> FieldConstraints {
        FieldConstraints { velocity: self.velocity.homogenized(), pressure: self.pressure.homogenized() }
    }
}

/// Hanging-node constraints making Q2 velocity and Q1 pressure globally continuous.
pub fn hanging_node_constraints(mesh: &Mesh, dofs: &DofHandler) -> Result<FieldConstraints> {
    let mut vel = ConstraintSet::new();
    let mut pre = ConstraintSet::new();
    for &cell in mesh.active_cells() {
        for face in 0..4 {
            let FaceNeighbor::Finer([c0, c1]) = mesh.neighbor(cell, face) else { continue };
            for c in [c0, c1] {
                if mesh.cell(c).level() != mesh.cell(cell).level() + 1 {
                    return invalid("mesh is not 2:1 balanced");
                }
            }
            let q2 = dofs.cell_q2_nodes(cell);
            let [v0, mid, v1] = Q2_FACE_NODES[face].map(|l| q2[l]);
            let of = opposite_face(face);
            let f0 = Q2_FACE_NODES[of].map(|l| dofs.cell_q2_nodes(c0)[l]);
            let f1 = Q2_FACE_NODES[of].map(|l| dofs.cell_q2_nodes(c1)[l]);
            // f0 = [v0, e(1/4), hanging vertex], f1 = [hanging vertex, e(3/4), v1]
            let lines = [
                (f0[2], vec![(mid, 1.0)]),
                (f0[1], vec![(v0, 0.375), (mid, 0.75), (v1, -0.125)]),
                (f1[1], vec![(v0, -0.125), (mid, 0.75), (v1, 0.375)]),
            ];
            for (node, entries) in lines {
                for comp in 0..2 {
                    let e = entries.iter().map(|&(m, w)| (2 * m + comp, w)).collect();
                    vel.set_line(2 * node + comp, e, 0.0);
                }
            }
            let p = dofs.cell_pressure_dofs(cell);
            let [p0, p1] = Q1_FACE_NODES[face].map(|l| p[l]);
            let hang = dofs.cell_pressure_dofs(c0)[Q1_FACE_NODES[of][1]];
            pre.set_line(hang, vec![(p0, 0.5), (p1, 0.5)], 0.0);
        }
    }
    vel.close()?;
    pre.close()?;
    Ok(FieldConstraints { velocity: vel, pressure: pre })
}

/// Interpolated Dirichlet data on all four boundary parts.
///
/// Parts are processed bottom, right, left, top; later parts win at shared
/// corners, so the top boundary owns the two upper corners.
pub fn dirichlet_constraints(
    dofs: &DofHandler,
    data: &dyn Fn(BoundaryMarker, [f64; 2]) -> [f64; 2],
) -> ConstraintSet {
    let mut c = ConstraintSet::new();
    for marker in [BoundaryMarker::Bottom, BoundaryMarker::Right, BoundaryMarker::Left, BoundaryMarker::Top] {
        for &node in dofs.boundary_nodes(marker) {
            let v = data(marker, dofs.q2_node_point(node));
            c.set_line(2 * node, Vec::new(), v[0]);
            c.set_line(2 * node + 1, Vec::new(), v[1]);
        }
    }
    c.closed = true;
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closure_substitutes_chains() {
        let mut c = ConstraintSet::new();
        c.set_line(0, vec![(1, 0.5), (2, 0.5)], 0.0);
        c.set_line(1, vec![(3, 2.0)], 1.0);
        c.close().unwrap();
        let l = c.get(0).unwrap();
        assert_eq!(l.entries, vec![(2, 0.5), (3, 1.0)]);
        assert_eq!(l.inhomogeneity, 0.5);
        let mut x = vec![0.0, 0.0, 2.0, 3.0];
        c.distribute(&mut x);
        assert_eq!(x, vec![4.5, 7.0, 2.0, 3.0]);
    }

    #[test]
    fn cycles_are_rejected() {
        let mut c = ConstraintSet::new();
        c.set_line(0, vec![(1, 1.0)], 0.0);
        c.set_line(1, vec![(0, 1.0)], 0.0);
        assert!(c.close().is_err());
    }

    #[test]
    fn top_wins_at_corners() {
        let mesh = Mesh::uniform(1).unwrap();
        let dofs = DofHandler::new(&mesh);
        let c = dirichlet_constraints(&dofs, &|m, _| if m == BoundaryMarker::Top { [1.0, 0.0] } else { [0.0, 0.0] });
        let corner = (0..dofs.n_q2_nodes()).find(|&n| dofs.q2_node_point(n) == [1.0, 1.0]).unwrap();
        assert_eq!(c.get(2 * corner).unwrap().inhomogeneity, 1.0);
        let low = (0..dofs.n_q2_nodes()).find(|&n| dofs.q2_node_point(n) == [1.0, 0.0]).unwrap();
        assert_eq!(c.get(2 * low).unwrap().inhomogeneity, 0.0);
    }
}
