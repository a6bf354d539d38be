//! Degree-of-freedom numbering for the Q2 velocity / Q1 pressure pair, and
//! the affine constraints (hanging nodes, Dirichlet data) acting on them.
//!
//! Velocity unknowns come first: scalar Q2 node `n` carries velocity dofs
//! `2n` and `2n + 1`. Pressure unknowns are numbered separately from zero.

mod constraints;

use std::collections::{BTreeMap, BTreeSet, HashMap};

pub use constraints::{
    dirichlet_constraints, hanging_node_constraints, ConstraintLine, ConstraintSet, FieldConstraints,
};

use crate::mesh::{BoundaryMarker, CellId, FaceNeighbor, IntPoint, Mesh};

/// Local Q2 nodes on each face, ordered along the face.
pub const Q2_FACE_NODES: [[usize; 3]; 4] = [[0, 3, 6], [2, 5, 8], [0, 1, 2], [6, 7, 8]];
/// Local Q1 nodes on each face, ordered along the face.
pub const Q1_FACE_NODES: [[usize; 2]; 4] = [[0, 2], [1, 3], [0, 1], [2, 3]];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum NodeKind {
    Vertex,
    Edge,
    Interior,
}

#[derive(Clone, Debug)]
pub struct DofHandler {
    n_q2: usize,
    n_q1: usize,
    /// Position of each mesh cell in the active list, `usize::MAX` if inactive.
    active_pos: Vec<usize>,
    cell_q2: Vec<[usize; 9]>,
    cell_q1: Vec<[usize; 4]>,
    q2_points: Vec<[f64; 2]>,
    q1_points: Vec<[f64; 2]>,
    boundary: BTreeMap<BoundaryMarker, Vec<usize>>,
}

impl DofHandler {
    pub fn new(mesh: &Mesh) -> DofHandler {
        let mut q2_ids: HashMap<(NodeKind, IntPoint), usize> = HashMap::new();
        let mut q1_ids: HashMap<IntPoint, usize> = HashMap::new();
        let mut q2_points = Vec::new();
        let mut q1_points = Vec::new();
        let mut active_pos = vec![usize::MAX; mesh.n_cells()];
        let mut cell_q2 = Vec::with_capacity(mesh.n_active());
        let mut cell_q1 = Vec::with_capacity(mesh.n_active());
        let mut boundary: BTreeMap<BoundaryMarker, BTreeSet<usize>> = BTreeMap::new();

        for (pos, &cell) in mesh.active_cells().iter().enumerate() {
            active_pos[cell] = pos;
            let key = mesh.cell(cell).key;
            let o = key.int_origin();
            let half = key.int_side() / 2;
            let mut q2 = [0; 9];
            for (local, slot) in q2.iter_mut().enumerate() {
                let (a, b) = (local % 3, local / 3);
                let kind = match (a == 1, b == 1) {
                    (false, false) => NodeKind::Vertex,
                    (true, true) => NodeKind::Interior,
                    _ => NodeKind::Edge,
                };
                let p = [o[0] + a as u64 * half, o[1] + b as u64 * half];
                *slot = *q2_ids.entry((kind, p)).or_insert_with(|| {
                    q2_points.push(int_point(p));
                    q2_points.len() - 1
                });
            }
            let mut q1 = [0; 4];
            for (local, slot) in q1.iter_mut().enumerate() {
                let (a, b) = (local % 2, local / 2);
                let p = [o[0] + a as u64 * 2 * half, o[1] + b as u64 * 2 * half];
                *slot = *q1_ids.entry(p).or_insert_with(|| {
                    q1_points.push(int_point(p));
                    q1_points.len() - 1
                });
            }
            for face in 0..4 {
                if let FaceNeighbor::Boundary(m) = mesh.neighbor(cell, face) {
                    boundary.entry(m).or_default().extend(Q2_FACE_NODES[face].iter().map(|&l| q2[l]));
                }
            }
            cell_q2.push(q2);
            cell_q1.push(q1);
        }
        DofHandler {
            n_q2: q2_points.len(),
            n_q1: q1_points.len(),
            active_pos,
            cell_q2,
            cell_q1,
            q2_points,
            q1_points,
            boundary: boundary.into_iter().map(|(m, s)| (m, s.into_iter().collect())).collect(),
        }
    }

    pub fn n_q2_nodes(&self) -> usize {
        self.n_q2
    }

    pub fn n_velocity_dofs(&self) -> usize {
        2 * self.n_q2
    }

    pub fn n_pressure_dofs(&self) -> usize {
        self.n_q1
    }

    pub fn n_dofs(&self) -> usize {
        self.n_velocity_dofs() + self.n_pressure_dofs()
    }

    fn pos(&self, cell: CellId) -> usize {
        let p = self.active_pos[cell];
        assert!(p != usize::MAX, "cell {cell} is not active");
        p
    }

    /// Scalar Q2 node numbers of an active cell, local order `a + 3b`.
    pub fn cell_q2_nodes(&self, cell: CellId) -> &[usize; 9] {
        &self.cell_q2[self.pos(cell)]
    }

    /// Velocity dofs of an active cell; local index `c * 9 + a` for component `c`.
    pub fn cell_velocity_dofs(&self, cell: CellId) -> [usize; 18] {
        let q2 = self.cell_q2_nodes(cell);
        std::array::from_fn(|i| 2 * q2[i % 9] + i / 9)
    }

    /// Pressure dofs of an active cell, local order `a + 2b`.
    pub fn cell_pressure_dofs(&self, cell: CellId) -> [usize; 4] {
        self.cell_q1[self.pos(cell)]
    }

    pub fn q2_node_point(&self, node: usize) -> [f64; 2] {
        self.q2_points[node]
    }

    pub fn q1_node_point(&self, node: usize) -> [f64; 2] {
        self.q1_points[node]
    }

    pub fn q2_points(&self) -> &[[f64; 2]] {
        &self.q2_points
    }

    pub fn q1_points(&self) -> &[[f64; 2]] {
        &self.q1_points
    }

    /// Q2 nodes on the boundary part `marker`, ascending.
    pub fn boundary_nodes(&self, marker: BoundaryMarker) -> &[usize] {
        self.boundary.get(&marker).map_or(&[], Vec::as_slice)
    }
}

fn int_point(p: IntPoint) -> [f64; 2] {
    let s = (1u64 << (crate::mesh::MAX_LEVEL as u32 + 1)) as f64;
    [p[0] as f64 / s, p[1] as f64 / s]
}
