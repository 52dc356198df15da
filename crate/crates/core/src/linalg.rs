//! Sparse matrix plumbing: a small CSR type for matrix-vector products and a
//! thin wrapper around faer's supernodal Cholesky for SPD / Hermitian solves.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use num_complex::Complex64;
use std::ops::{Add, AddAssign, Mul, Sub};

use crate::error::{GlError, Result};

pub type C64 = Complex64;

/// Run faer kernels single-threaded so factorizations are reproducible
/// bit for bit; concurrency comes from independent jobs instead.
pub fn use_sequential_kernels() {
    faer::set_global_parallelism(faer::Par::Seq);
}

/// Scalars we assemble and factor: real and complex doubles.
pub trait Scalar:
    faer::traits::ComplexField
    + Copy
    + Send
    + Sync
    + Default
    + PartialEq
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + AddAssign
    + 'static
{
    fn zero() -> Self;
    fn conj_s(self) -> Self;
    fn abs2(self) -> f64;
    fn scale(self, s: f64) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn conj_s(self) -> Self {
        self
    }
    fn abs2(self) -> f64 {
        self * self
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

impl Scalar for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn conj_s(self) -> Self {
        self.conj()
    }
    fn abs2(self) -> f64 {
        self.norm_sqr()
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

/// Compressed sparse row matrix. Duplicate triplets are summed on assembly.
#[derive(Clone, Debug)]
pub struct Csr<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Scalar> Csr<T> {
    pub fn from_triplets(nrows: usize, ncols: usize, trip: &[(usize, usize, T)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, _, _) in trip {
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut idx = vec![0usize; trip.len()];
        let mut val = vec![T::zero(); trip.len()];
        for &(r, c, v) in trip {
            let p = fill[r];
            idx[p] = c;
            val[p] = v;
            fill[r] += 1;
        }
        // sort each row and merge duplicates
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(trip.len());
        let mut values = Vec::with_capacity(trip.len());
        indptr.push(0);
        let mut row: Vec<(usize, T)> = Vec::new();
        for r in 0..nrows {
            row.clear();
            for p in counts[r]..counts[r + 1] {
                row.push((idx[p], val[p]));
            }
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut acc = row[k].1;
                k += 1;
                while k < row.len() && row[k].0 == c {
                    acc += row[k].1;
                    k += 1;
                }
                indices.push(c);
                values.push(acc);
            }
            indptr.push(indices.len());
        }
        Csr { nrows, ncols, indptr, indices, values }
    }

    pub fn identity_scaled(d: &[T]) -> Self {
        let n = d.len();
        Csr {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for p in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[p] * x[self.indices[p]];
            }
            *yr = acc;
        }
    }

    /// y = Aᵀ x (plain transpose, no conjugation).
    pub fn tmatvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![T::zero(); self.ncols];
        for r in 0..self.nrows {
            let xr = x[r];
            for p in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[p]] += self.values[p] * xr;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                t.push((self.indices[p], r, self.values[p]));
            }
        }
        Csr::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        for p in self.indptr[r]..self.indptr[r + 1] {
            if self.indices[p] == c {
                return self.values[p];
            }
        }
        T::zero()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                t.push((r, self.indices[p], self.values[p]));
            }
        }
        t
    }

    /// Linear combination a·self + b·other (same shape).
    pub fn axpby(&self, a: f64, other: &Csr<T>, b: f64) -> Self {
        let mut t: Vec<(usize, usize, T)> = self
            .triplets()
            .into_iter()
            .map(|(r, c, v)| (r, c, v.scale(a)))
            .collect();
        t.extend(other.triplets().into_iter().map(|(r, c, v)| (r, c, v.scale(b))));
        Csr::from_triplets(self.nrows, self.ncols, &t)
    }

    /// max |A - A^H| entry, for Hermitian checks.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.nrows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[p];
                let d = self.values[p] - self.get(c, r).conj_s();
                worst = worst.max(d.abs2().sqrt());
            }
        }
        worst
    }
}

/// Sparse product A·B.
pub fn spmm<T: Scalar>(a: &Csr<T>, b: &Csr<T>) -> Csr<T> {
    assert_eq!(a.ncols, b.nrows);
    let mut t = Vec::new();
    for r in 0..a.nrows {
        for p in a.indptr[r]..a.indptr[r + 1] {
            let k = a.indices[p];
            let av = a.values[p];
            for q in b.indptr[k]..b.indptr[k + 1] {
                t.push((r, b.indices[q], av * b.values[q]));
            }
        }
    }
    Csr::from_triplets(a.nrows, b.ncols, &t)
}

fn lower_faer<T: Scalar>(a: &Csr<T>) -> Result<SparseColMat<usize, T>> {
    let mut trip = Vec::with_capacity(a.nnz() / 2 + a.nrows);
    for r in 0..a.nrows {
        for p in a.indptr[r]..a.indptr[r + 1] {
            let c = a.indices[p];
            if r >= c {
                trip.push(Triplet::new(r, c, a.values[p]));
            }
        }
    }
    SparseColMat::try_new_from_triplets(a.nrows, a.ncols, &trip)
        .map_err(|e| GlError::Solver(format!("sparse assembly failed: {e:?}")))
}

/// Cholesky factorization of a symmetric (Hermitian) positive definite matrix,
/// with the symbolic analysis kept around so refactoring a matrix with the
/// same pattern is cheap.
pub struct SpdSolver<T: Scalar> {
    mat: Csr<T>,
    symbolic: SymbolicLlt<usize>,
    llt: Llt<usize, T>,
    pub refine_steps: usize,
}

impl<T: Scalar> SpdSolver<T> {
    pub fn new(mat: Csr<T>) -> Result<Self> {
        if mat.nrows != mat.ncols {
            return Err(GlError::Size(format!(
                "factor: matrix is {}x{}",
                mat.nrows, mat.ncols
            )));
        }
        let low = lower_faer(&mat)?;
        let symbolic = SymbolicLlt::try_new(low.symbolic(), Side::Lower)
            .map_err(|e| GlError::Solver(format!("symbolic Cholesky failed: {e:?}")))?;
        let llt = Llt::try_new_with_symbolic(symbolic.clone(), low.as_ref(), Side::Lower)
            .map_err(|e| GlError::Solver(format!("Cholesky failed: {e:?}")))?;
        Ok(SpdSolver { mat, symbolic, llt, refine_steps: 2 })
    }

    /// Numeric refactorization; the sparsity pattern must match the original.
    pub fn refactor(&mut self, mat: Csr<T>) -> Result<()> {
        let low = lower_faer(&mat)?;
        self.llt = Llt::try_new_with_symbolic(self.symbolic.clone(), low.as_ref(), Side::Lower)
            .map_err(|e| GlError::Solver(format!("Cholesky failed: {e:?}")))?;
        self.mat = mat;
        Ok(())
    }

    pub fn matrix(&self) -> &Csr<T> {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows
    }

    fn raw_solve(&self, b: &[T]) -> Vec<T> {
        let n = b.len();
        let rhs = Mat::<T>::from_fn(n, 1, |i, _| b[i]);
        let x = self.llt.solve(&rhs);
        (0..n).map(|i| x[(i, 0)]).collect()
    }

    /// Solve with a few steps of iterative refinement.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.dim());
        let mut x = self.raw_solve(b);
        for _ in 0..self.refine_steps {
            let ax = self.mat.matvec(&x);
            let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
            let dx = self.raw_solve(&r);
            for (xi, di) in x.iter_mut().zip(dx) {
                *xi += di;
            }
        }
        x
    }

    /// Relative residual ‖Ax − b‖ / ‖b‖ (0 when b = 0 and x = 0).
    pub fn residual(&self, x: &[T], b: &[T]) -> f64 {
        let ax = self.mat.matvec(x);
        let num: f64 = ax.iter().zip(b).map(|(&a, &bb)| (a - bb).abs2()).sum();
        let den: f64 = b.iter().map(|v| v.abs2()).sum();
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn wdot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), w)| x * y * w).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for x in it {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}
