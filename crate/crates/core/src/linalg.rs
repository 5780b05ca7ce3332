//! Small dense linear algebra: a row-major matrix and Householder QR with
//! column pivoting.
//!
//! Problem sizes here are tiny (a handful of columns, at most a few hundred
//! thousand rows), so everything is written for clarity over blocking.

use std::ops::{Index, IndexMut};

use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has wrong length");
        Self { rows, cols, data }
    }

    /// Builds a matrix from a slice of equal-length rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)])
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                let out_row = out.row_mut(i);
                for (o, &b) in out_row.iter_mut().zip(orow) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// Computes `selfᵀ v`.
    pub fn tr_matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len(), "tr_matvec dimension mismatch");
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &x) in out.iter_mut().zip(self.row(i)) {
                *o = *o + x * vi;
            }
        }
        out
    }

    /// Computes `Σᵢ wᵢ rowᵢ rowᵢᵀ`, or `selfᵀ self` without weights.
    pub fn weighted_gram(&self, weights: Option<&[T]>) -> Self {
        let p = self.cols;
        let mut g = Self::zeros(p, p);
        for i in 0..self.rows {
            let w = weights.map_or(T::one(), |w| w[i]);
            let r = self.row(i);
            for a in 0..p {
                let ra = r[a] * w;
                for b in a..p {
                    g[(a, b)] = g[(a, b)] + ra * r[b];
                }
            }
        }
        g.symmetrize_from_upper();
        g
    }

    fn symmetrize_from_upper(&mut self) {
        for a in 0..self.rows {
            for b in 0..a {
                self[(a, b)] = self[(b, a)];
            }
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    /// Copies `block` into `self` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Self) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        let mut out = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn trace(&self) -> T {
        self.diagonal().into_iter().sum()
    }

    /// Largest absolute asymmetry `|aᵢⱼ − aⱼᵢ|`.
    pub fn asymmetry(&self) -> T {
        let mut m = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                m = m.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        m
    }

    /// Inverse of a square matrix via pivoted QR.
    pub fn inverse(&self) -> Option<Self> {
        assert_eq!(self.rows, self.cols, "inverse of non-square matrix");
        let n = self.rows;
        let qr = PivotedQr::new(self);
        if qr.rank_deficient_column().is_some() {
            return None;
        }
        let mut inv = Self::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            let col = qr.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Some(inv)
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Relative pivot tolerance below which a column counts as dependent.
pub fn rank_tolerance<T: Scalar>() -> T {
    T::lit(1e-10).max(T::epsilon() * T::lit(100.0))
}

/// Householder QR factorisation `A P = Q R` with column pivoting.
///
/// Reflectors are kept in compact form; `Q` is never formed explicitly.
#[derive(Debug, Clone)]
pub struct PivotedQr<T> {
    rows: usize,
    cols: usize,
    /// Householder vectors; `reflectors[k]` acts on rows `k..`.
    reflectors: Vec<Vec<T>>,
    betas: Vec<T>,
    /// Upper-triangular factor, `cols × cols`, in pivoted column order.
    r: Matrix<T>,
    /// `perm[k]` is the original column placed at position `k`.
    perm: Vec<usize>,
}

impl<T: Scalar> PivotedQr<T> {
    pub fn new(a: &Matrix<T>) -> Self {
        let (n, p) = (a.rows(), a.cols());
        let mut work = a.clone();
        let mut perm: Vec<usize> = (0..p).collect();
        let steps = n.min(p);
        let mut reflectors = Vec::with_capacity(steps);
        let mut betas = Vec::with_capacity(steps);

        for k in 0..steps {
            // Choose the remaining column of largest norm.
            let mut best = k;
            let mut best_norm = T::neg_infinity();
            for j in k..p {
                let s: T = (k..n).map(|i| work[(i, j)] * work[(i, j)]).sum();
                if s > best_norm {
                    best_norm = s;
                    best = j;
                }
            }
            if best != k {
                for i in 0..n {
                    let tmp = work[(i, k)];
                    work[(i, k)] = work[(i, best)];
                    work[(i, best)] = tmp;
                }
                perm.swap(k, best);
            }

            let norm = best_norm.sqrt();
            let mut v: Vec<T> = (k..n).map(|i| work[(i, k)]).collect();
            if norm == T::zero() {
                reflectors.push(v);
                betas.push(T::zero());
                continue;
            }
            let alpha = if v[0] >= T::zero() { -norm } else { norm };
            v[0] = v[0] - alpha;
            let vtv: T = v.iter().map(|&x| x * x).sum();
            let beta = if vtv == T::zero() {
                T::zero()
            } else {
                T::lit(2.0) / vtv
            };
            work[(k, k)] = alpha;
            for i in (k + 1)..n {
                work[(i, k)] = T::zero();
            }
            for j in (k + 1)..p {
                let w: T = (k..n).map(|i| v[i - k] * work[(i, j)]).sum::<T>() * beta;
                for i in k..n {
                    work[(i, j)] = work[(i, j)] - w * v[i - k];
                }
            }
            reflectors.push(v);
            betas.push(beta);
        }

        let mut r = Matrix::zeros(p, p);
        for i in 0..steps {
            for j in i..p {
                r[(i, j)] = work[(i, j)];
            }
        }
        Self {
            rows: n,
            cols: p,
            reflectors,
            betas,
            r,
            perm,
        }
    }

    pub fn r(&self) -> &Matrix<T> {
        &self.r
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Original index of the first column whose pivot falls below the rank
    /// tolerance, if any. A design with more columns than rows always
    /// reports its first unpivoted column.
    pub fn rank_deficient_column(&self) -> Option<usize> {
        let p = self.cols;
        if p == 0 {
            return None;
        }
        let largest = self.r[(0, 0)].abs();
        let tol = rank_tolerance::<T>() * largest;
        for k in 0..p {
            if k >= self.rows || self.r[(k, k)].abs() <= tol || largest == T::zero() {
                return Some(self.perm[k]);
            }
        }
        None
    }

    /// Applies `Qᵀ` to a vector of length `rows`.
    pub fn apply_qt(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.rows);
        let mut y = b.to_vec();
        for (k, (v, &beta)) in self.reflectors.iter().zip(&self.betas).enumerate() {
            if beta == T::zero() {
                continue;
            }
            let w: T = v.iter().zip(&y[k..]).map(|(&a, &b)| a * b).sum::<T>() * beta;
            for (yi, &vi) in y[k..].iter_mut().zip(v) {
                *yi = *yi - w * vi;
            }
        }
        y
    }

    /// Least-squares solution of `A x ≈ b`. Assumes full column rank.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let qtb = self.apply_qt(b);
        let z = self.back_substitute(&qtb[..self.cols]);
        let mut x = vec![T::zero(); self.cols];
        for (k, &orig) in self.perm.iter().enumerate() {
            x[orig] = z[k];
        }
        x
    }

    fn back_substitute(&self, b: &[T]) -> Vec<T> {
        let p = self.cols;
        let mut x = vec![T::zero(); p];
        for i in (0..p).rev() {
            let mut s = b[i];
            for (j, &xj) in x.iter().enumerate().skip(i + 1) {
                s = s - self.r[(i, j)] * xj;
            }
            x[i] = s / self.r[(i, i)];
        }
        x
    }

    /// `(AᵀA)⁻¹ = P R⁻¹ R⁻ᵀ Pᵀ`, in original column order.
    pub fn gram_inverse(&self) -> Matrix<T> {
        let p = self.cols;
        // R⁻¹ by back substitution on identity columns.
        let mut rinv = Matrix::zeros(p, p);
        let mut e = vec![T::zero(); p];
        for j in 0..p {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            let col = self.back_substitute(&e);
            for i in 0..p {
                rinv[(i, j)] = col[i];
            }
        }
        let inner = rinv.matmul(&rinv.transpose());
        let mut out = Matrix::zeros(p, p);
        for a in 0..p {
            for b in 0..p {
                out[(self.perm[a], self.perm[b])] = inner[(a, b)];
            }
        }
        out
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues<T: Scalar>(a: &Matrix<T>) -> Vec<T> {
    assert_eq!(a.rows(), a.cols());
    let n = a.rows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off = off + m[(i, j)] * m[(i, j)];
                }
            }
        }
        if off <= T::epsilon() * T::epsilon() * (T::one() + m.trace().abs()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev = m.diagonal();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}
