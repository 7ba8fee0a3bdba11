//! Small dense/sparse linear algebra layer.
//!
//! Assembled operators are plain CSR matrices with hand-rolled matvecs;
//! direct factorizations are delegated to faer's sparse LU behind
//! [`SparseLu`] so the rest of the crate never touches solver internals.

use crate::error::SolveError;
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// y += alpha * x
pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(y: &mut [f64], alpha: f64) {
    for yi in y.iter_mut() {
        *yi *= alpha;
    }
}

/// a - b as a new vector.
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Coordinate-format accumulator used during assembly. Duplicate entries add.
#[derive(Debug, Clone)]
pub struct Triplets {
    pub nrows: usize,
    pub ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    /// Adds `alpha * a` at a block offset.
    pub fn add_csr(&mut self, row_offset: usize, col_offset: usize, alpha: f64, a: &Csr) {
        if alpha == 0.0 {
            return;
        }
        for row in 0..a.nrows {
            for k in a.row_ptr[row]..a.row_ptr[row + 1] {
                self.push(row_offset + row, col_offset + a.col_idx[k], alpha * a.vals[k]);
            }
        }
    }

    pub fn to_csr(&self) -> Csr {
        let mut sorted = self.entries.clone();
        sorted.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut counts = vec![0usize; self.nrows + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(sorted.len());
        let mut vals: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut prev: Option<(usize, usize)> = None;
        for &(r, c, v) in &sorted {
            if prev == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                vals.push(v);
                counts[r + 1] += 1;
                prev = Some((r, c));
            }
        }
        for r in 0..self.nrows {
            counts[r + 1] += counts[r];
        }
        Csr {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr: counts,
            col_idx,
            vals,
        }
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_add(1.0, x, &mut y);
        y
    }

    /// y += alpha * A * x
    pub fn mul_vec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for row in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[row] += alpha * acc;
        }
    }

    /// x^T A y (bilinear pairing).
    pub fn pair(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nrows);
        dot(x, &self.mul_vec(y))
    }

    /// y += alpha * A^T * x
    pub fn mul_transpose_vec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for row in 0..self.nrows {
            let xr = alpha * x[row];
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                y[self.col_idx[k]] += xr * self.vals[k];
            }
        }
    }

    /// Copies a contiguous sub-block.
    pub fn submatrix(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Csr {
        let mut t = Triplets::new(rows.len(), cols.len());
        for row in rows.clone() {
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                let c = self.col_idx[k];
                if cols.contains(&c) {
                    t.push(row - rows.start, c - cols.start, self.vals[k]);
                }
            }
        }
        t.to_csr()
    }

    pub fn transpose(&self) -> Csr {
        let mut t = Triplets::new(self.ncols, self.nrows);
        for row in 0..self.nrows {
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                t.push(self.col_idx[k], row, self.vals[k]);
            }
        }
        t.to_csr()
    }

    /// Sum of scaled matrices over the union sparsity pattern.
    pub fn linear_combination(terms: &[(f64, &Csr)]) -> Csr {
        assert!(!terms.is_empty());
        let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
        let mut t = Triplets::new(nrows, ncols);
        for &(alpha, a) in terms {
            assert_eq!((a.nrows, a.ncols), (nrows, ncols));
            t.add_csr(0, 0, alpha, a);
        }
        t.to_csr()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for row in 0..self.nrows {
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                d[row][self.col_idx[k]] = self.vals[k];
            }
        }
        d
    }
}

/// Direct sparse LU factorization (row/column pivoted) of a square matrix.
pub struct SparseLu {
    n: usize,
    lu: Lu<usize, f64>,
}

impl SparseLu {
    pub fn factor(a: &Csr) -> Result<Self, SolveError> {
        assert_eq!(a.nrows, a.ncols, "LU needs a square matrix");
        let mut triplets = Vec::with_capacity(a.nnz());
        for row in 0..a.nrows {
            for k in a.row_ptr[row]..a.row_ptr[row + 1] {
                triplets.push(Triplet::new(row, a.col_idx[k], a.vals[k]));
            }
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(a.nrows, a.ncols, &triplets)
            .map_err(|e| SolveError::Singular(format!("assembly failed: {e:?}")))?;
        let symbolic = SymbolicLu::try_new(mat.symbolic())
            .map_err(|e| SolveError::Singular(format!("symbolic factorization failed: {e:?}")))?;
        let lu = Lu::try_new_with_symbolic(symbolic, mat.as_ref())
            .map_err(|e| SolveError::Singular(format!("numeric factorization failed: {e:?}")))?;
        Ok(Self { n: a.nrows, lu })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut rhs = faer::Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(rhs.as_mut());
        (0..self.n).map(|i| rhs[(i, 0)]).collect()
    }

    /// Solves A^T x = b reusing the factorization of A.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut rhs = faer::Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_transpose_in_place(rhs.as_mut());
        (0..self.n).map(|i| rhs[(i, 0)]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub history: Vec<f64>,
}

/// Unrestarted GMRES with Givens rotations, zero initial guess.
///
/// `apply` is the matrix action; convergence is on the residual relative to
/// `||b||`. Returns the best iterate even on stagnation.
pub fn gmres<F>(
    mut apply: F,
    b: &[f64],
    tol_rel: f64,
    max_dim: usize,
) -> (Vec<f64>, GmresOutcome)
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let beta = norm2(b);
    let mut history = vec![beta];
    if beta == 0.0 {
        return (
            vec![0.0; n],
            GmresOutcome {
                iterations: 0,
                converged: true,
                residual: 0.0,
                history,
            },
        );
    }
    let target = tol_rel * beta;
    let max_dim = max_dim.min(n).max(1);

    let mut basis: Vec<Vec<f64>> = vec![b.iter().map(|x| x / beta).collect()];
    // Hessenberg columns after Givens, and the rotation coefficients.
    let mut h_cols: Vec<Vec<f64>> = Vec::new();
    let mut givens: Vec<(f64, f64)> = Vec::new();
    let mut g = vec![beta];

    let mut iterations = 0;
    let mut residual = beta;
    while iterations < max_dim && residual > target {
        let j = iterations;
        let mut w = apply(&basis[j]);
        let mut h = vec![0.0; j + 2];
        // modified Gram-Schmidt
        for (i, v) in basis.iter().enumerate() {
            h[i] = dot(&w, v);
            axpy(&mut w, -h[i], v);
        }
        h[j + 1] = norm2(&w);
        let subdiag = h[j + 1];
        // apply accumulated rotations
        for (i, &(c, s)) in givens.iter().enumerate() {
            let tmp = c * h[i] + s * h[i + 1];
            h[i + 1] = -s * h[i] + c * h[i + 1];
            h[i] = tmp;
        }
        // new rotation annihilating h[j+1]
        let (c, s) = {
            let (a, bb) = (h[j], h[j + 1]);
            let r = (a * a + bb * bb).sqrt();
            if r == 0.0 {
                (1.0, 0.0)
            } else {
                (a / r, bb / r)
            }
        };
        let r = c * h[j] + s * h[j + 1];
        h[j] = r;
        h[j + 1] = 0.0;
        givens.push((c, s));
        g.push(-s * g[j]);
        g[j] *= c;
        h_cols.push(h);
        iterations += 1;
        residual = g[j + 1].abs();
        history.push(residual);

        if subdiag > 0.0 && iterations < max_dim {
            basis.push(w.iter().map(|x| x / subdiag).collect());
        } else if subdiag == 0.0 {
            // lucky breakdown: exact solution in the current space
            break;
        }
    }

    // back substitution for the least-squares coefficients
    let k = iterations;
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut acc = g[i];
        for l in (i + 1)..k {
            acc -= h_cols[l][i] * y[l];
        }
        y[i] = acc / h_cols[i][i];
    }
    let mut x = vec![0.0; n];
    for (i, yi) in y.iter().enumerate() {
        axpy(&mut x, *yi, &basis[i]);
    }
    let converged = residual <= target;
    (
        x,
        GmresOutcome {
            iterations,
            converged,
            residual,
            history,
        },
    )
}

/// Dense Gaussian elimination with partial pivoting; test oracle only.
#[cfg(test)]
pub(crate) fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        assert!(a[col][col] != 0.0, "singular oracle system");
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_merge_duplicates() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 0, 2.0);
        t.push(1, 1, 4.0);
        t.push(0, 1, -1.0);
        let a = t.to_csr();
        assert_eq!(a.nnz(), 3);
        let d = a.to_dense();
        assert_eq!(d[0], vec![3.0, -1.0]);
        assert_eq!(d[1], vec![0.0, 4.0]);
    }

    #[test]
    fn csr_matvec_and_transpose() {
        let mut t = Triplets::new(2, 3);
        t.push(0, 0, 1.0);
        t.push(0, 2, 2.0);
        t.push(1, 1, 3.0);
        let a = t.to_csr();
        assert_eq!(a.mul_vec(&[1.0, 1.0, 1.0]), vec![3.0, 3.0]);
        let at = a.transpose();
        assert_eq!(at.mul_vec(&[1.0, 1.0]), vec![1.0, 3.0, 2.0]);
    }

    #[test]
    fn sparse_lu_solves_and_transposes() {
        // A = [[2, 1], [0, 3]]
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 2.0);
        t.push(0, 1, 1.0);
        t.push(1, 1, 3.0);
        let lu = SparseLu::factor(&t.to_csr()).unwrap();
        let x = lu.solve(&[1.0, 2.0]);
        assert!((x[0] - 1.0 / 6.0).abs() < 1e-14 && (x[1] - 2.0 / 3.0).abs() < 1e-14);
        let y = lu.solve_transpose(&[1.0, 2.0]);
        assert!((y[0] - 0.5).abs() < 1e-14 && (y[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn gmres_reaches_direct_solution() {
        // small nonsymmetric system
        let a = vec![
            vec![4.0, 1.0, 0.0],
            vec![-1.0, 3.0, 0.5],
            vec![0.0, 2.0, 5.0],
        ];
        let apply = |x: &[f64]| {
            a.iter()
                .map(|row| row.iter().zip(x).map(|(aij, xj)| aij * xj).sum())
                .collect::<Vec<f64>>()
        };
        let b = [1.0, 0.0, -2.0];
        let (x, out) = gmres(apply, &b, 1e-12, 3);
        assert!(out.converged);
        let r: Vec<f64> = (0..3)
            .map(|i| b[i] - a[i].iter().zip(&x).map(|(aij, xj)| aij * xj).sum::<f64>())
            .collect();
        assert!(norm_inf(&r) < 1e-10);
    }
}
