use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::linalg::solvers::Solve;
use faer::MatMut;

use super::CsrMatrix;
use crate::error::{Error, Result};

/// Fill-reducing symbolic analysis of a sparsity pattern, reusable for every
/// matrix sharing that pattern.
#[derive(Clone, Debug)]
pub struct LuSymbolic {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    symbolic: SymbolicLu<usize>,
}

impl LuSymbolic {
    pub fn analyze(a: &CsrMatrix) -> Result<Self> {
        check_square(a)?;
        let t = a.transpose();
        let view = SymbolicSparseColMatRef::new_checked(a.nrows(), a.ncols(), t.row_ptr(), None, t.col_idx());
        let symbolic = SymbolicLu::try_new(view).map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(LuSymbolic { n: a.nrows(), row_ptr: a.row_ptr().to_vec(), col_idx: a.col_idx().to_vec(), symbolic })
    }

    /// Whether `a` has exactly the analysed pattern.
    pub fn matches(&self, a: &CsrMatrix) -> bool {
        a.nrows() == self.n && a.row_ptr() == self.row_ptr && a.col_idx() == self.col_idx
    }

    pub fn factorize(&self, a: &CsrMatrix) -> Result<LuFactorization> {
        if !self.matches(a) {
            return Err(Error::Factorization("matrix pattern differs from the analysed one".into()));
        }
        let t = a.transpose();
        let sym = SymbolicSparseColMatRef::new_checked(a.nrows(), a.ncols(), t.row_ptr(), None, t.col_idx());
        let mat = SparseColMatRef::new(sym, t.values());
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), mat)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let f = LuFactorization { n: self.n, lu };
        // partial pivoting may run through an exactly singular matrix without an error
        let ones = vec![1.0; self.n];
        let mut x = a.mul_vec(&ones);
        f.solve_in_place(&mut x);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization("matrix is numerically singular".into()));
        }
        Ok(f)
    }
}

/// Sparse direct LU factorization `PAQ = LU` with partial pivoting.
#[derive(Clone, Debug)]
pub struct LuFactorization {
    n: usize,
    lu: Lu<usize, f64>,
}

impl LuFactorization {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        LuSymbolic::analyze(a)?.factorize(a)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        if self.n == 0 {
            return;
        }
        let m = MatMut::from_column_major_slice_mut(b, self.n, 1);
        self.lu.solve_in_place(m);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

fn check_square(a: &CsrMatrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Factorization(format!("matrix is {}x{}, not square", a.nrows(), a.ncols())));
    }
    Ok(())
}
