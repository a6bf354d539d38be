//! Tensor-product Lagrange elements, Gauss quadrature and the affine cell map.

use crate::error::{invalid, Result};

/// Lagrange element of degree 1 or 2 on the reference square `[0,1]^2`.
///
/// Local node `a + (p+1) b` sits at `(a/p, b/p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceElement {
    degree: usize,
}

impl ReferenceElement {
    pub fn new(degree: usize) -> Result<Self> {
        if !(1..=2).contains(&degree) {
            return invalid(format!("unsupported element degree {degree}"));
        }
        Ok(ReferenceElement { degree })
    }

    pub fn q1() -> Self {
        ReferenceElement { degree: 1 }
    }

    pub fn q2() -> Self {
        ReferenceElement { degree: 2 }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_dofs(&self) -> usize {
        (self.degree + 1) * (self.degree + 1)
    }

    fn split(&self, i: usize) -> Result<(usize, usize)> {
        if i >= self.n_dofs() {
            return invalid(format!("shape index {i} out of range for Q{}", self.degree));
        }
        Ok((i % (self.degree + 1), i / (self.degree + 1)))
    }

    pub fn node(&self, i: usize) -> Result<[f64; 2]> {
        let (a, b) = self.split(i)?;
        let p = self.degree as f64;
        Ok([a as f64 / p, b as f64 / p])
    }

    pub fn shape_value(&self, i: usize, xi: [f64; 2]) -> Result<f64> {
        let (a, b) = self.split(i)?;
        Ok(self.basis_1d(a, xi[0]) * self.basis_1d(b, xi[1]))
    }

    pub fn shape_gradient(&self, i: usize, xi: [f64; 2]) -> Result<[f64; 2]> {
        let (a, b) = self.split(i)?;
        Ok([
            self.deriv_1d(a, xi[0]) * self.basis_1d(b, xi[1]),
            self.basis_1d(a, xi[0]) * self.deriv_1d(b, xi[1]),
        ])
    }

    fn basis_1d(&self, k: usize, t: f64) -> f64 {
        match (self.degree, k) {
            (1, 0) => 1.0 - t,
            (1, _) => t,
            (2, 0) => (1.0 - t) * (1.0 - 2.0 * t),
            (2, 1) => 4.0 * t * (1.0 - t),
            (_, _) => t * (2.0 * t - 1.0),
        }
    }

    fn deriv_1d(&self, k: usize, t: f64) -> f64 {
        match (self.degree, k) {
            (1, 0) => -1.0,
            (1, _) => 1.0,
            (2, 0) => 4.0 * t - 3.0,
            (2, 1) => 4.0 - 8.0 * t,
            (_, _) => 4.0 * t - 1.0,
        }
    }

    /// Values and reference gradients at every point of a rule.
    pub fn tabulate(&self, points: &[[f64; 2]]) -> Tabulation {
        let n = self.n_dofs();
        let mut values = Vec::with_capacity(points.len() * n);
        let mut grads = Vec::with_capacity(points.len() * n);
        for &xi in points {
            for i in 0..n {
                values.push(self.shape_value(i, xi).expect("index in range"));
                grads.push(self.shape_gradient(i, xi).expect("index in range"));
            }
        }
        Tabulation { n_shape: n, values, grads }
    }
}

/// Shape values and reference gradients at a fixed list of points.
#[derive(Clone, Debug)]
pub struct Tabulation {
    n_shape: usize,
    values: Vec<f64>,
    grads: Vec<[f64; 2]>,
}

impl Tabulation {
    pub fn n_shape(&self) -> usize {
        self.n_shape
    }

    #[inline]
    pub fn value(&self, q: usize, i: usize) -> f64 {
        self.values[q * self.n_shape + i]
    }

    #[inline]
    pub fn grad(&self, q: usize, i: usize) -> [f64; 2] {
        self.grads[q * self.n_shape + i]
    }

    pub fn values_at(&self, q: usize) -> &[f64] {
        &self.values[q * self.n_shape..(q + 1) * self.n_shape]
    }

    pub fn grads_at(&self, q: usize) -> &[[f64; 2]] {
        &self.grads[q * self.n_shape..(q + 1) * self.n_shape]
    }
}

pub const MAX_GAUSS_POINTS: usize = 8;

/// Gauss-Legendre points and weights on `[0, 1]`, exact for degree `2q - 1`.
pub fn gauss_legendre(q: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(1..=MAX_GAUSS_POINTS).contains(&q) {
        return invalid(format!("{q} Gauss points requested, supported range is 1..={MAX_GAUSS_POINTS}"));
    }
    if q == 1 {
        return Ok((vec![0.5], vec![1.0]));
    }
    let mut x = vec![0.0; q];
    let mut w = vec![0.0; q];
    for i in 0..q.div_ceil(2) {
        // Newton on the Legendre polynomial from the Chebyshev guess
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=q {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = q as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let weight = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = 0.5 * (1.0 - z);
        x[q - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * weight;
        w[q - 1 - i] = 0.5 * weight;
    }
    Ok((x, w))
}

/// Tensor Gauss rule on the reference square.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn gauss(q: usize) -> Result<Self> {
        let (x, w) = gauss_legendre(q)?;
        let mut points = Vec::with_capacity(q * q);
        let mut weights = Vec::with_capacity(q * q);
        for j in 0..q {
            for i in 0..q {
                points.push([x[i], x[j]]);
                weights.push(w[i] * w[j]);
            }
        }
        Ok(QuadratureRule { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Affine map data of a parallelogram cell at one reference point.
#[derive(Clone, Copy, Debug)]
pub struct CellMap {
    pub point: [f64; 2],
    /// `jacobian[r][c] = d x_r / d xi_c`.
    pub jacobian: [[f64; 2]; 2],
    pub det: f64,
    inv_t: [[f64; 2]; 2],
}

impl CellMap {
    /// Physical gradient from a reference gradient, `J^{-T} g`.
    #[inline]
    pub fn physical_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv_t[0][0] * g[0] + self.inv_t[0][1] * g[1],
            self.inv_t[1][0] * g[0] + self.inv_t[1][1] * g[1],
        ]
    }
}

/// Maps a reference point into a cell given by counterclockwise corners.
pub fn map_cell(vertices: &[[f64; 2]; 4], xi: [f64; 2]) -> Result<CellMap> {
    let [v0, v1, _, v3] = *vertices;
    let e1 = [v1[0] - v0[0], v1[1] - v0[1]];
    let e2 = [v3[0] - v0[0], v3[1] - v0[1]];
    let jacobian = [[e1[0], e2[0]], [e1[1], e2[1]]];
    let det = e1[0] * e2[1] - e2[0] * e1[1];
    if !(det > 0.0) {
        return invalid(format!("degenerate or inverted cell (det = {det})"));
    }
    let point = [v0[0] + e1[0] * xi[0] + e2[0] * xi[1], v0[1] + e1[1] * xi[0] + e2[1] * xi[1]];
    let inv_t = [[e2[1] / det, -e1[1] / det], [-e2[0] / det, e1[0] / det]];
    Ok(CellMap { point, jacobian, det, inv_t })
}
