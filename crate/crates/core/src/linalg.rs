//! Small dense kernels for local stencil systems and the global sparse
//! system with its direct solver.
//!
//! The sparse LU factorization is delegated to `faer`. The symbolic analysis
//! (fill-reducing ordering and elimination structure) is computed once per
//! sparsity pattern and reused across Picard iterations.

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Col, Par};

use crate::error::SolveError;
use crate::scalar::{Real, Wide};

/// In-place Cholesky factorization of a row-major `n×n` SPD matrix; the
/// lower triangle receives `L`. On failure returns the offending pivot.
pub fn cholesky_in_place<W: Wide>(a: &mut [W], n: usize) -> Result<(), usize> {
    debug_assert_eq!(a.len(), n * n);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d = d - a[j * n + k] * a[j * n + k];
        }
        if !(d > W::zero()) || !d.is_finite() {
            return Err(j);
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s = s - a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for i in 0..j {
            a[i * n + j] = W::zero();
        }
    }
    Ok(())
}

/// Solves `L Lᵀ x = b` in place given the factor from [`cholesky_in_place`].
pub fn cholesky_solve<W: Wide>(l: &[W], n: usize, b: &mut [W]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s = s - l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// One matrix row in coordinate form.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRow<T> {
    pub cols: Vec<usize>,
    pub vals: Vec<T>,
}

impl<T: Real> SparseRow<T> {
    pub fn new(cols: Vec<usize>, vals: Vec<T>) -> Self {
        debug_assert_eq!(cols.len(), vals.len());
        Self { cols, vals }
    }

    pub fn unit(col: usize) -> Self {
        Self { cols: vec![col], vals: vec![T::one()] }
    }

    pub fn dot(&self, x: &[T]) -> T {
        self.cols.iter().zip(&self.vals).fold(T::zero(), |acc, (&c, &v)| acc + v * x[c])
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Coefficient at column `col`, zero if absent.
    pub fn get(&self, col: usize) -> T {
        self.cols.iter().position(|&c| c == col).map_or(T::zero(), |k| self.vals[k])
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Builds a square matrix from one row per index. Duplicate columns
    /// within a row are summed; columns are sorted.
    pub fn from_rows(rows: &[SparseRow<T>], n_cols: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut scratch: Vec<(usize, T)> = Vec::new();
        for r in rows {
            scratch.clear();
            scratch.extend(r.cols.iter().copied().zip(r.vals.iter().copied()));
            scratch.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for &(c, v) in &scratch {
                debug_assert!(c < n_cols);
                if last == Some(c) {
                    let k = values.len() - 1;
                    values[k] = values[k] + v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { n_rows: rows.len(), n_cols, row_ptr, col_idx, values }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (c, v) = self.row(i);
        c.iter().position(|&x| x == j).map_or(T::zero(), |k| v[k])
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n_rows)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).fold(T::zero(), |acc, (&j, &a)| acc + a * x[j])
            })
            .collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.n_rows).map(|i| self.row(i).1.iter().fold(T::zero(), |acc, &a| acc + a.abs())).fold(T::zero(), T::max)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.n_cols]; self.n_rows];
        for (i, row) in d.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                row[j] = a;
            }
        }
        d
    }

    fn pattern_matches(&self, other_ptr: &[usize], other_idx: &[usize]) -> bool {
        self.row_ptr == other_ptr && self.col_idx == other_idx
    }

    /// Column-major copy in `f64` for the factorization backend, row `i`
    /// multiplied by `row_scale[i]`.
    fn to_faer(&self, row_scale: &[f64]) -> Result<SparseColMat<usize, f64>, SolveError> {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let col_ptr = counts.clone();
        let mut next = counts;
        let mut row_idx = vec![0usize; self.nnz()];
        let mut vals = vec![0.0f64; self.nnz()];
        for (i, &s) in row_scale.iter().enumerate().take(self.n_rows) {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                let k = next[j];
                row_idx[k] = i;
                vals[k] = a.as_f64() * s;
                next[j] += 1;
            }
        }
        let symbolic = SymbolicSparseColMat::new_checked(self.n_rows, self.n_cols, col_ptr, None, row_idx);
        Ok(SparseColMat::new(symbolic, vals))
    }
}

/// Direct sparse solver that caches the symbolic factorization of the last
/// sparsity pattern it saw.
#[derive(Default)]
pub struct SparseSolver {
    cached: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
}

impl SparseSolver {
    pub fn new() -> Self {
        // The numeric factorization runs sequentially so results do not depend
        // on the worker count.
        faer::set_global_parallelism(Par::Seq);
        Self { cached: None }
    }

    pub fn solve<T: Real>(&mut self, a: &CsrMatrix<T>, b: &[T]) -> Result<Vec<T>, SolveError> {
        let n = a.n_rows();
        if a.n_cols() != n || b.len() != n {
            return Err(SolveError::Dimension { rows: n, cols: a.n_cols(), rhs: b.len() });
        }
        if let Some(row) = (0..n).find(|&i| a.row(i).1.iter().all(|&v| v == T::zero())) {
            return Err(SolveError::EmptyRow { row });
        }
        // Power-of-two row equilibration: exact, and keeps flux rows scaled
        // by a tiny K from spoiling the pivoting.
        let scale: Vec<f64> = (0..n)
            .map(|i| {
                let m = a.row(i).1.iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
                (-m.log2().round()).exp2()
            })
            .collect();
        let mat = a.to_faer(&scale)?;
        let reuse = matches!(&self.cached, Some((p, c, _)) if a.pattern_matches(p, c));
        if !reuse {
            let symbolic = SymbolicLu::try_new(mat.symbolic())
                .map_err(|_| SolveError::Singular { row: 0, residual: f64::INFINITY })?;
            self.cached = Some((a.row_ptr.clone(), a.col_idx.clone(), symbolic));
        }
        let symbolic = self.cached.as_ref().map(|c| c.2.clone()).expect("cached above");
        let lu = Lu::try_new_with_symbolic(symbolic, mat.as_ref())
            .map_err(|_| SolveError::Singular { row: 0, residual: f64::INFINITY })?;
        let rhs = Col::<f64>::from_fn(n, |i| b[i].as_f64() * scale[i]);
        let x = lu.solve(&rhs);
        let x: Vec<T> = (0..n).map(|i| T::lit(x[i])).collect();
        check_residual(a, &x, b)?;
        Ok(x)
    }
}

/// Verifies `‖Ax − b‖∞ ≤ 1e-10·(‖A‖∞‖x‖∞ + ‖b‖∞)` scaled to the working
/// precision, reporting the worst row otherwise.
fn check_residual<T: Real>(a: &CsrMatrix<T>, x: &[T], b: &[T]) -> Result<(), SolveError> {
    if let Some(row) = x.iter().position(|v| !v.is_finite()) {
        return Err(SolveError::Singular { row, residual: f64::INFINITY });
    }
    let ax = a.mul_vec(x);
    let (row, worst) = ax
        .iter()
        .zip(b)
        .map(|(&p, &q)| (p - q).abs())
        .enumerate()
        .fold((0, T::zero()), |acc, (i, r)| if r > acc.1 { (i, r) } else { acc });
    let xn = x.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let bn = b.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let scale = a.norm_inf() * xn + bn;
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(1e4));
    if worst > tol * scale {
        return Err(SolveError::Singular { row, residual: worst.as_f64() });
    }
    Ok(())
}

/// Solves `A x = b` with a fresh sparse LU factorization.
pub fn solve_sparse<T: Real>(a: &CsrMatrix<T>, b: &[T]) -> Result<Vec<T>, SolveError> {
    SparseSolver::new().solve(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_roundtrip() {
        let a = [4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0];
        let mut l = a;
        cholesky_in_place(&mut l, 3).unwrap();
        let mut x = [1.0, 2.0, 3.0];
        cholesky_solve(&l, 3, &mut x);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((r - [1.0, 2.0, 3.0][i]).abs() < 1e-14);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = [1.0, 1.0, 1.0, 1.0];
        assert_eq!(cholesky_in_place(&mut a, 2), Err(1));
    }

    #[test]
    fn identity_solve() {
        let rows: Vec<SparseRow<f64>> = (0..4).map(SparseRow::unit).collect();
        let a = CsrMatrix::from_rows(&rows, 4);
        let b = [1.0, -2.0, 3.5, 0.25];
        assert_eq!(solve_sparse(&a, &b).unwrap(), b.to_vec());
    }

    #[test]
    fn singular_is_reported() {
        let rows = vec![SparseRow::new(vec![0, 1], vec![1.0, 1.0]), SparseRow::new(vec![0, 1], vec![1.0, 1.0])];
        let a = CsrMatrix::from_rows(&rows, 2);
        assert!(matches!(solve_sparse(&a, &[1.0, 2.0]), Err(SolveError::Singular { .. })));
        let rows = vec![SparseRow::unit(0), SparseRow::new(vec![1], vec![0.0])];
        let a = CsrMatrix::from_rows(&rows, 2);
        assert_eq!(solve_sparse(&a, &[1.0, 2.0]), Err(SolveError::EmptyRow { row: 1 }));
    }

    #[test]
    fn duplicate_columns_are_summed() {
        let rows = vec![SparseRow::new(vec![1, 0, 1], vec![1.0, 2.0, 3.0])];
        let a = CsrMatrix::from_rows(&rows, 2);
        assert_eq!(a.row(0), (&[0usize, 1][..], &[2.0, 4.0][..]));
    }

    #[test]
    fn symbolic_cache_is_reused_across_values() {
        let mut solver = SparseSolver::new();
        for scale in [1.0, 2.0, 3.0] {
            let rows = vec![
                SparseRow::new(vec![0, 1], vec![2.0 * scale, -1.0]),
                SparseRow::new(vec![0, 1], vec![-1.0, 2.0 * scale]),
            ];
            let a = CsrMatrix::from_rows(&rows, 2);
            let x = solver.solve(&a, &[1.0, 1.0]).unwrap();
            let expected = 1.0 / (2.0 * scale - 1.0);
            assert!((x[0] - expected).abs() < 1e-14 && (x[1] - expected).abs() < 1e-14);
        }
    }
}
