//! Sparse storage, sparse LU and a handful of small dense kernels.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

type C = Complex64;

/// Compressed sparse row matrix with complex entries.
#[derive(Clone, Debug, Default)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C>,
}

impl CsrMatrix {
    /// Duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, C)>) -> Self {
        t.par_sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<C> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Self { nrows, ncols, indptr, indices, values }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }
    pub fn ncols(&self) -> usize {
        self.ncols
    }
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[C]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> C {
        let (idx, val) = self.row(r);
        match idx.binary_search(&c) {
            Ok(k) => val[k],
            Err(_) => C::new(0.0, 0.0),
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (idx, val) = self.row(r);
            idx.iter().zip(val).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn matvec(&self, x: &[C]) -> Vec<C> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| {
                let (idx, val) = self.row(r);
                idx.iter().zip(val).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    /// `yᴴ A x`
    pub fn form(&self, x: &[C], y: &[C]) -> C {
        self.matvec(x).iter().zip(y).map(|(a, b)| b.conj() * a).sum()
    }

    /// `self + alpha * other`
    pub fn add_scaled(&self, other: &CsrMatrix, alpha: C) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let t = self
            .triplets()
            .chain(other.triplets().map(|(r, c, v)| (r, c, alpha * v)))
            .collect();
        CsrMatrix::from_triplets(self.nrows, self.ncols, t)
    }

    pub fn conj_transpose(&self) -> CsrMatrix {
        let t = self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, t)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `‖A − Aᴴ‖_F / ‖A‖_F`
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.frobenius_norm();
        if n == 0.0 {
            return 0.0;
        }
        self.add_scaled(&self.conj_transpose(), C::new(-1.0, 0.0)).frobenius_norm() / n
    }

    /// Extracts `A[rows, cols]`; indices are positions in the given lists.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            map[c] = k;
        }
        let mut t = Vec::new();
        for (i, &r) in rows.iter().enumerate() {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                if map[c] != usize::MAX {
                    t.push((i, map[c], v));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), cols.len(), t)
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, C>> {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| Error::SolverBreakdown(format!("sparse assembly: {e:?}")))
    }

    pub fn to_dense(&self) -> Mat<C> {
        let mut m = Mat::<C>::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }
}

/// Sparse LU factorization; immutable and shareable once built.
pub struct SparseLu {
    lu: faer::sparse::linalg::solvers::Lu<usize, C>,
    n: usize,
}

impl SparseLu {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        assert_eq!(a.nrows(), a.ncols());
        let n = a.nrows();
        let m = a.to_faer()?;
        let lu = m
            .sp_lu()
            .map_err(|e| Error::SolverBreakdown(format!("sparse LU failed: {e:?}")))?;
        Ok(Self { lu, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[C]) -> Vec<C> {
        let mut m = Mat::<C>::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(m.as_mut());
        (0..self.n).map(|i| m[(i, 0)]).collect()
    }

    /// Solves in place for every column of `b`.
    pub fn solve_mat(&self, b: &mut Mat<C>) {
        if b.ncols() == 0 {
            return;
        }
        self.lu.solve_in_place(b.as_mut());
    }
}

pub fn dot(x: &[C], y: &[C]) -> C {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm2(x: &[C]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn mat_frobenius(m: &Mat<C>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

pub fn adjoint(m: &Mat<C>) -> Mat<C> {
    Mat::from_fn(m.ncols(), m.nrows(), |i, j| m[(j, i)].conj())
}

/// Inverse square root of a Hermitian positive semidefinite matrix, restricted to
/// eigenvalues above `rtol * λ_max`. Returns `(B^{-1/2} basis, rank)` as an `n × r` matrix
/// `W` with `Wᴴ B W = I`.
pub fn whitening(b: &Mat<C>, rtol: f64) -> Result<Mat<C>> {
    let evd = b
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::SolverBreakdown(format!("dense eigensolver: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let n = b.nrows();
    let lmax = (0..n).map(|i| s[i].re).fold(0.0, f64::max);
    let keep: Vec<usize> = (0..n).filter(|&i| s[i].re > rtol * lmax).collect();
    Ok(Mat::from_fn(n, keep.len(), |i, k| {
        let j = keep[k];
        u[(i, j)] / s[j].re.sqrt()
    }))
}

/// Dense Hermitian-definite generalized eigenproblem `A x = θ B x`.
/// Eigenvalues ascending; eigenvectors are B-orthonormal columns.
pub fn hermitian_generalized_eigen(a: &Mat<C>, b: &Mat<C>) -> Result<(Vec<f64>, Mat<C>)> {
    let w = whitening(b, 1e-13)?;
    let c = adjoint(&w) * a * &w;
    let c = Mat::from_fn(c.nrows(), c.ncols(), |i, j| (c[(i, j)] + c[(j, i)].conj()) * 0.5);
    let evd = c
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::SolverBreakdown(format!("dense eigensolver: {e:?}")))?;
    let vals: Vec<f64> = (0..c.nrows()).map(|i| evd.S().column_vector()[i].re).collect();
    let vecs = &w * evd.U();
    Ok((vals, vecs))
}

/// Tikhonov-filtered least squares `min ‖A c − b‖² + α‖c‖²` through the thin SVD.
/// Singular values below `1e-15 σ_max` are discarded when `α = 0`.
pub fn tikhonov_lstsq(a: &Mat<C>, b: &[C], alpha: f64) -> Result<(Vec<C>, Vec<f64>)> {
    let svd = a
        .thin_svd()
        .map_err(|e| Error::SolverBreakdown(format!("svd: {e:?}")))?;
    let (u, v) = (svd.U(), svd.V());
    let k = u.ncols();
    let sig: Vec<f64> = (0..k).map(|i| svd.S().column_vector()[i].re).collect();
    let smax = sig.iter().cloned().fold(0.0, f64::max);
    let mut c = vec![C::new(0.0, 0.0); a.ncols()];
    for i in 0..k {
        let s = sig[i];
        if s <= 1e-15 * smax {
            continue;
        }
        let utb: C = (0..a.nrows()).map(|r| u[(r, i)].conj() * b[r]).sum();
        let f = s / (s * s + alpha);
        for (j, cj) in c.iter_mut().enumerate() {
            *cj += v[(j, i)] * utb * f;
        }
    }
    Ok((c, sig))
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
