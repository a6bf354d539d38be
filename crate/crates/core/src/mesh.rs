//! Quadtree meshes of the unit square.
//!
//! A mesh is described by its set of leaf cells. Every cell is identified by a
//! [`CellKey`] (level plus integer position), so the same geometric cell keeps
//! its key across refinement cycles, which the solution transfer relies on.
//! Meshes are always 2:1 balanced across faces.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{invalid, Result};

/// Deepest refinement level representable with exact integer vertex coordinates.
pub const MAX_LEVEL: u8 = 28;

/// Integer coordinates of a point, scaled by `2^(MAX_LEVEL + 1)` so that edge
/// midpoints of the finest cells are still exact.
pub type IntPoint = [u64; 2];

const COORD_SHIFT: u32 = MAX_LEVEL as u32 + 1;

pub type CellId = usize;
pub type VertexId = usize;

/// Position of a cell in the quadtree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub level: u8,
    pub ix: u32,
    pub iy: u32,
}

impl CellKey {
    pub const ROOT: CellKey = CellKey { level: 0, ix: 0, iy: 0 };

    pub fn new(level: u8, ix: u32, iy: u32) -> Self {
        CellKey { level, ix, iy }
    }

    pub fn parent(&self) -> Option<CellKey> {
        if self.level == 0 {
            None
        } else {
            Some(CellKey { level: self.level - 1, ix: self.ix / 2, iy: self.iy / 2 })
        }
    }

    /// Children in z-order: (0,0), (1,0), (0,1), (1,1).
    pub fn children(&self) -> [CellKey; 4] {
        let l = self.level + 1;
        let (x, y) = (2 * self.ix, 2 * self.iy);
        [
            CellKey::new(l, x, y),
            CellKey::new(l, x + 1, y),
            CellKey::new(l, x, y + 1),
            CellKey::new(l, x + 1, y + 1),
        ]
    }

    /// Index of this cell among its parent's children.
    pub fn child_index(&self) -> usize {
        ((self.ix & 1) + 2 * (self.iy & 1)) as usize
    }

    /// Same-level neighbour across `face`, or `None` on the domain boundary.
    pub fn neighbor(&self, face: usize) -> Option<CellKey> {
        let n = 1u32 << self.level;
        let (ix, iy) = (self.ix, self.iy);
        match face {
            0 if ix > 0 => Some(CellKey::new(self.level, ix - 1, iy)),
            1 if ix + 1 < n => Some(CellKey::new(self.level, ix + 1, iy)),
            2 if iy > 0 => Some(CellKey::new(self.level, ix, iy - 1)),
            3 if iy + 1 < n => Some(CellKey::new(self.level, ix, iy + 1)),
            _ => None,
        }
    }

    pub fn side(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    pub fn origin(&self) -> [f64; 2] {
        let h = self.side();
        [self.ix as f64 * h, self.iy as f64 * h]
    }

    /// Integer coordinates of the lower-left corner.
    pub fn int_origin(&self) -> IntPoint {
        let s = COORD_SHIFT - self.level as u32;
        [(self.ix as u64) << s, (self.iy as u64) << s]
    }

    /// Side length in integer coordinates.
    pub fn int_side(&self) -> u64 {
        1u64 << (COORD_SHIFT - self.level as u32)
    }

    /// Ancestor of this key at `level` (or itself when the levels agree).
    pub fn ancestor(&self, level: u8) -> CellKey {
        let d = self.level - level;
        CellKey::new(level, self.ix >> d, self.iy >> d)
    }

    /// True when `other` is this cell or one of its descendants.
    pub fn covers(&self, other: &CellKey) -> bool {
        other.level >= self.level && other.ancestor(self.level) == *self
    }
}

/// Face index opposite to `face` (0 left, 1 right, 2 bottom, 3 top).
pub fn opposite_face(face: usize) -> usize {
    face ^ 1
}

/// Whether a face is normal to the x axis.
pub fn face_is_vertical(face: usize) -> bool {
    face < 2
}

/// Outward unit normal of a face.
pub fn face_normal(face: usize) -> [f64; 2] {
    [[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]][face]
}

/// Child positions (in z-order) touching a face, ordered along the face.
pub fn children_on_face(face: usize) -> [usize; 2] {
    [[0, 2], [1, 3], [0, 1], [2, 3]][face]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryMarker {
    Bottom,
    Right,
    Top,
    Left,
}

impl BoundaryMarker {
    pub fn of_face(face: usize) -> BoundaryMarker {
        [BoundaryMarker::Left, BoundaryMarker::Right, BoundaryMarker::Bottom, BoundaryMarker::Top][face]
    }
}

/// What lies across a face of an active cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceNeighbor {
    /// An active cell of the same level.
    Same(CellId),
    /// An active cell one level coarser; `subface` is the half of its face we touch.
    Coarser { cell: CellId, subface: usize },
    /// Two active cells one level finer, ordered along the face.
    Finer([CellId; 2]),
    Boundary(BoundaryMarker),
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub id: CellId,
    pub key: CellKey,
    pub parent: Option<CellId>,
    pub children: Option<[CellId; 4]>,
    /// Corner vertices, counterclockwise from the lower left.
    pub vertices: [VertexId; 4],
    pub active: bool,
}

impl Cell {
    pub fn level(&self) -> u8 {
        self.key.level
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    cells: Vec<Cell>,
    index: HashMap<CellKey, CellId>,
    active: Vec<CellId>,
    neighbors: HashMap<CellId, [FaceNeighbor; 4]>,
}

impl Mesh {
    /// Uniform mesh with `2^n x 2^n` cells.
    pub fn uniform(n: u8) -> Result<Mesh> {
        if n > MAX_LEVEL {
            return invalid(format!("refinement level {n} exceeds {MAX_LEVEL}"));
        }
        let m = 1u32 << n;
        let leaves = (0..m).flat_map(|iy| (0..m).map(move |ix| CellKey::new(n, ix, iy))).collect();
        Mesh::from_leaves(&leaves)
    }

    /// Builds a mesh from a set of leaves that must tile the unit square and be balanced.
    pub fn from_leaves(leaves: &BTreeSet<CellKey>) -> Result<Mesh> {
        if leaves.is_empty() {
            return invalid("empty leaf set");
        }
        let mut internal = BTreeSet::new();
        for leaf in leaves {
            if leaf.level > MAX_LEVEL {
                return invalid(format!("cell level {} exceeds {MAX_LEVEL}", leaf.level));
            }
            let mut k = *leaf;
            while let Some(p) = k.parent() {
                if !internal.insert(p) {
                    break;
                }
                k = p;
            }
        }
        for leaf in leaves {
            if internal.contains(leaf) {
                return invalid(format!("leaf {leaf:?} overlaps a finer leaf"));
            }
        }

        let mut mesh = Mesh {
            vertices: Vec::new(),
            cells: Vec::new(),
            index: HashMap::new(),
            active: Vec::new(),
            neighbors: HashMap::new(),
        };
        let mut vertex_ids: HashMap<IntPoint, VertexId> = HashMap::new();
        let mut area = 0u128;

        // depth-first z-order traversal; the stack holds (key, parent)
        let mut stack = vec![(CellKey::ROOT, None::<CellId>)];
        while let Some((key, parent)) = stack.pop() {
            let id = mesh.cells.len();
            let o = key.int_origin();
            let s = key.int_side();
            let corners = [[o[0], o[1]], [o[0] + s, o[1]], [o[0] + s, o[1] + s], [o[0], o[1] + s]];
            let mut vs = [0; 4];
            for (v, c) in vs.iter_mut().zip(corners) {
                *v = *vertex_ids.entry(c).or_insert_with(|| {
                    mesh.vertices.push(int_to_point(c));
                    mesh.vertices.len() - 1
                });
            }
            let is_leaf = leaves.contains(&key);
            if !is_leaf && !internal.contains(&key) {
                return invalid(format!("leaf set does not cover cell {key:?}"));
            }
            mesh.cells.push(Cell { id, key, parent, children: None, vertices: vs, active: is_leaf });
            mesh.index.insert(key, id);
            if let Some(p) = parent {
                let ci = key.child_index();
                let ch = mesh.cells[p].children.get_or_insert([usize::MAX; 4]);
                ch[ci] = id;
            }
            if is_leaf {
                mesh.active.push(id);
                area += (s as u128) * (s as u128);
            } else {
                for c in key.children().iter().rev() {
                    stack.push((*c, Some(id)));
                }
            }
        }
        let full = 1u128 << (2 * COORD_SHIFT);
        if area != full {
            return invalid("leaf set does not tile the unit square");
        }

        for &id in &mesh.active {
            let mut nb = [FaceNeighbor::Boundary(BoundaryMarker::Bottom); 4];
            for (face, slot) in nb.iter_mut().enumerate() {
                *slot = mesh.compute_neighbor(id, face)?;
            }
            mesh.neighbors.insert(id, nb);
        }
        Ok(mesh)
    }

    fn compute_neighbor(&self, id: CellId, face: usize) -> Result<FaceNeighbor> {
        let key = self.cells[id].key;
        let Some(nk) = key.neighbor(face) else {
            return Ok(FaceNeighbor::Boundary(BoundaryMarker::of_face(face)));
        };
        if let Some(&n) = self.index.get(&nk) {
            if self.cells[n].active {
                return Ok(FaceNeighbor::Same(n));
            }
            let ch = self.cells[n].children.expect("inactive cell has children");
            let [a, b] = children_on_face(opposite_face(face));
            let pair = [ch[a], ch[b]];
            if pair.iter().any(|&c| !self.cells[c].active) {
                return invalid(format!("mesh is not 2:1 balanced at cell {key:?}"));
            }
            return Ok(FaceNeighbor::Finer(pair));
        }
        let pk = nk.parent().expect("level > 0");
        match self.index.get(&pk) {
            Some(&p) if self.cells[p].active => {
                let subface = if face_is_vertical(face) { nk.iy & 1 } else { nk.ix & 1 } as usize;
                Ok(FaceNeighbor::Coarser { cell: p, subface })
            }
            _ => invalid(format!("mesh is not 2:1 balanced at cell {key:?}")),
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertex(&self, v: VertexId) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, id: CellId) -> &Cell {
        &self.cells[id]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Active cells in depth-first z-order.
    pub fn active_cells(&self) -> &[CellId] {
        &self.active
    }

    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    pub fn cell_by_key(&self, key: &CellKey) -> Option<CellId> {
        self.index.get(key).copied()
    }

    pub fn neighbor(&self, id: CellId, face: usize) -> FaceNeighbor {
        self.neighbors[&id][face]
    }

    pub fn neighbors(&self, id: CellId) -> &[FaceNeighbor; 4] {
        &self.neighbors[&id]
    }

    pub fn max_level(&self) -> u8 {
        self.active.iter().map(|&c| self.cells[c].key.level).max().unwrap_or(0)
    }

    pub fn cell_side(&self, id: CellId) -> f64 {
        self.cells[id].key.side()
    }

    pub fn cell_diameter(&self, id: CellId) -> f64 {
        std::f64::consts::SQRT_2 * self.cell_side(id)
    }

    /// Corner coordinates, counterclockwise from the lower left.
    pub fn cell_vertices(&self, id: CellId) -> [[f64; 2]; 4] {
        self.cells[id].vertices.map(|v| self.vertices[v])
    }

    /// Active cell containing `point`; points on shared edges go to the upper/right cell
    /// except on the domain's upper/right boundary.
    pub fn locate(&self, point: [f64; 2]) -> Result<CellId> {
        let [x, y] = point;
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return invalid(format!("point ({x}, {y}) outside the unit square"));
        }
        let mut id = 0;
        loop {
            let c = &self.cells[id];
            let Some(ch) = c.children else { return Ok(id) };
            let o = c.key.origin();
            let half = 0.5 * c.key.side();
            let i = usize::from(x >= o[0] + half);
            let j = usize::from(y >= o[1] + half);
            id = ch[i + 2 * j];
        }
    }

    pub fn leaf_keys(&self) -> BTreeSet<CellKey> {
        self.active.iter().map(|&c| self.cells[c].key).collect()
    }

    /// Refines the flagged cells and coarsens complete sibling groups whose members
    /// are all flagged, then restores 2:1 balance by extra refinement.
    pub fn refine_and_coarsen(&self, refine: &[CellId], coarsen: &[CellId]) -> Result<Mesh> {
        for &c in refine.iter().chain(coarsen) {
            if c >= self.cells.len() || !self.cells[c].active {
                return invalid(format!("cell {c} is not an active cell"));
            }
        }
        let refine_set: BTreeSet<CellId> = refine.iter().copied().collect();
        if coarsen.iter().any(|c| refine_set.contains(c)) {
            return invalid("a cell is flagged for both refinement and coarsening");
        }
        let mut leaves = self.leaf_keys();

        let mut groups: BTreeMap<CellKey, usize> = BTreeMap::new();
        for &c in coarsen {
            if let Some(p) = self.cells[c].key.parent() {
                *groups.entry(p).or_default() += 1;
            }
        }
        let coarsen_set: BTreeSet<CellId> = coarsen.iter().copied().collect();
        for (p, _) in groups.into_iter().filter(|&(_, n)| n >= 4) {
            let ch = p.children();
            let all = ch.iter().all(|k| {
                self.index.get(k).is_some_and(|&id| self.cells[id].active && coarsen_set.contains(&id))
            });
            if all {
                for k in &ch {
                    leaves.remove(k);
                }
                leaves.insert(p);
            }
        }
        for &c in &refine_set {
            let key = self.cells[c].key;
            if key.level >= MAX_LEVEL {
                return invalid(format!("cannot refine beyond level {MAX_LEVEL}"));
            }
            leaves.remove(&key);
            leaves.extend(key.children());
        }
        balance(&mut leaves);
        Mesh::from_leaves(&leaves)
    }

    /// Refines every active cell once.
    pub fn refine_global(&self) -> Result<Mesh> {
        let all: Vec<CellId> = self.active.clone();
        self.refine_and_coarsen(&all, &[])
    }
}

fn int_to_point(p: IntPoint) -> [f64; 2] {
    let s = (1u64 << COORD_SHIFT) as f64;
    [p[0] as f64 / s, p[1] as f64 / s]
}

fn leaf_ancestor(leaves: &BTreeSet<CellKey>, key: CellKey) -> Option<CellKey> {
    let mut k = key;
    loop {
        if leaves.contains(&k) {
            return Some(k);
        }
        k = k.parent()?;
    }
}

/// Refines leaves until no two face neighbours differ by more than one level.
fn balance(leaves: &mut BTreeSet<CellKey>) {
    loop {
        let mut split = BTreeSet::new();
        for leaf in leaves.iter() {
            for face in 0..4 {
                if let Some(n) = leaf.neighbor(face) {
                    if let Some(a) = leaf_ancestor(leaves, n) {
                        if a.level + 1 < leaf.level {
                            split.insert(a);
                        }
                    }
                }
            }
        }
        if split.is_empty() {
            return;
        }
        for a in split {
            leaves.remove(&a);
            leaves.extend(a.children());
        }
    }
}
