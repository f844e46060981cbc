//! Dense linear least squares through the singular value decomposition.
//!
//! The SVD is a one-sided (Hestenes) Jacobi iteration: columns of the working copy are
//! rotated pairwise until mutually orthogonal. It is slow for large matrices but accurate
//! for the small, possibly ill-conditioned design matrices that linear elimination
//! produces, and it needs nothing beyond the scalar trait.

use std::fmt;
use std::ops::Index;

use thiserror::Error;

use crate::scalar::{norm, Scalar};

const MAX_SWEEPS: usize = 80;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix must have at least one row and one column (got {rows}x{cols})")]
    Empty { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("non-finite entry at index {0} of the right-hand side")]
    NonFiniteRhs(usize),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: |m[{row},{col}] - m[{col},{row}]| = {gap}")]
    Asymmetric { row: usize, col: usize, gap: f64 },
    #[error("tolerance {0} must lie in (0, 1)")]
    InvalidTolerance(f64),
}

/// Row-major dense matrix with finite entries and at least one row and column.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::Empty { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(k) = data.iter().position(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite {
                row: k / cols,
                col: k % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self, LinalgError> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(LinalgError::DimensionMismatch {
                    expected: n_cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(n_rows, n_cols, data)
    }

    pub fn from_columns<C: AsRef<[T]>>(columns: &[C]) -> Result<Self, LinalgError> {
        let n_cols = columns.len();
        let n_rows = columns.first().map_or(0, |c| c.as_ref().len());
        if let Some(bad) = columns.iter().find(|c| c.as_ref().len() != n_rows) {
            return Err(LinalgError::DimensionMismatch {
                expected: n_rows,
                found: bad.as_ref().len(),
            });
        }
        Self::from_fn(n_rows, n_cols, |i, j| columns[j].as_ref()[i])
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Result<Self, LinalgError> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn identity(n: usize) -> Self {
        let n = n.max(1);
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = T::one();
        }
        Self {
            rows: n,
            cols: n,
            data,
        }
    }

    /// Column vector (n x 1).
    pub fn column_vector(v: &[T]) -> Result<Self, LinalgError> {
        Self::new(v.len(), 1, v.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    /// `self * x`.
    pub fn mul_vec(&self, x: &[T]) -> Result<Vec<T>, LinalgError> {
        if x.len() != self.cols {
            return Err(LinalgError::DimensionMismatch {
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect())
    }

    /// `selfᵀ * y`.
    pub fn tr_mul_vec(&self, y: &[T]) -> Result<Vec<T>, LinalgError> {
        if y.len() != self.rows {
            return Err(LinalgError::DimensionMismatch {
                expected: self.rows,
                found: y.len(),
            });
        }
        let mut out = vec![T::zero(); self.cols];
        for (i, &yi) in y.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut data = vec![T::zero(); self.rows * other.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                for j in 0..other.cols {
                    data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(Self {
            rows: self.rows,
            cols: other.cols,
            data,
        })
    }

    /// Same matrix with each row `i` scaled by `d[i]`.
    pub fn scale_rows(&self, d: &[T]) -> Result<Self, LinalgError> {
        if d.len() != self.rows {
            return Err(LinalgError::DimensionMismatch {
                expected: self.rows,
                found: d.len(),
            });
        }
        Self::from_fn(self.rows, self.cols, |i, j| d[i] * self.get(i, j))
    }

    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }
}

impl<T: Scalar> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T: Scalar> fmt::Debug for DenseMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ` with `r = min(rows, cols)` triplets,
/// singular values sorted nonincreasing.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    /// rows x r, orthonormal columns (columns paired with zero singular values may be zero).
    pub u: Vec<Vec<T>>,
    pub singular_values: Vec<T>,
    /// cols x r, orthonormal columns.
    pub v: Vec<Vec<T>>,
}

/// Computes the thin SVD of `a`.
pub fn svd<T: Scalar>(a: &DenseMatrix<T>) -> Svd<T> {
    if a.rows >= a.cols {
        let (u, s, v) = jacobi_tall(a);
        Svd {
            u,
            singular_values: s,
            v,
        }
    } else {
        // A = (Aᵀ)ᵀ = (U' S V'ᵀ)ᵀ = V' S U'ᵀ
        let (u_t, s, v_t) = jacobi_tall(&a.transpose());
        Svd {
            u: v_t,
            singular_values: s,
            v: u_t,
        }
    }
}

/// One-sided Jacobi on a matrix with rows >= cols. Returns column vectors of U and V.
fn jacobi_tall<T: Scalar>(a: &DenseMatrix<T>) -> (Vec<Vec<T>>, Vec<T>, Vec<Vec<T>>) {
    let (m, n) = (a.rows, a.cols);
    let mut work: Vec<Vec<T>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    let eps = T::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n.saturating_sub(1) {
            for j in i + 1..n {
                let alpha: T = work[i].iter().map(|&x| x * x).sum();
                let beta: T = work[j].iter().map(|&x| x * x).sum();
                let gamma: T = work[i].iter().zip(&work[j]).map(|(&x, &y)| x * y).sum();
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for k in 0..m {
                    let (x, y) = (work[i][k], work[j][k]);
                    work[i][k] = c * x - s * y;
                    work[j][k] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (v[i][k], v[j][k]);
                    v[i][k] = c * x - s * y;
                    v[j][k] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut triplets: Vec<(T, Vec<T>, Vec<T>)> = work
        .into_iter()
        .zip(v)
        .map(|(col, vcol)| {
            let s = norm(&col);
            let u = if s > T::zero() {
                col.iter().map(|&x| x / s).collect()
            } else {
                vec![T::zero(); m]
            };
            (s, u, vcol)
        })
        .collect();
    // stable sort keeps the result deterministic for tied singular values
    triplets.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));

    let mut us = Vec::with_capacity(n);
    let mut ss = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    for (s, u, vc) in triplets {
        ss.push(s);
        us.push(u);
        vs.push(vc);
    }
    (us, ss, vs)
}

/// Result of a minimum-norm least-squares solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LsqSolution<T> {
    pub solution: Vec<T>,
    pub effective_rank: usize,
    pub residual_norm: T,
    /// Nonincreasing; the ratio of first to last (nonzero) gives the condition number.
    pub singular_values: Vec<T>,
}

impl<T: Scalar> LsqSolution<T> {
    pub fn condition_number(&self) -> T {
        match (self.singular_values.first(), self.singular_values.last()) {
            (Some(&hi), Some(&lo)) if lo > T::zero() => hi / lo,
            _ => T::infinity(),
        }
    }
}

/// Minimum-norm minimizer of `‖a·x − f‖²`.
///
/// Singular values below `rank_tol × σ_max` are treated as zero.
pub fn lstsq_min_norm<T: Scalar>(
    a: &DenseMatrix<T>,
    f: &[T],
    rank_tol: T,
) -> Result<LsqSolution<T>, LinalgError> {
    if f.len() != a.rows {
        return Err(LinalgError::DimensionMismatch {
            expected: a.rows,
            found: f.len(),
        });
    }
    if let Some(k) = f.iter().position(|x| !x.is_finite()) {
        return Err(LinalgError::NonFiniteRhs(k));
    }
    check_tol(rank_tol)?;

    let dec = svd(a);
    let sigma_max = dec.singular_values.first().copied().unwrap_or(T::zero());
    let cutoff = rank_tol * sigma_max;
    let mut x = vec![T::zero(); a.cols];
    let mut rank = 0;
    for ((s, u), v) in dec.singular_values.iter().zip(&dec.u).zip(&dec.v) {
        if *s <= cutoff || *s == T::zero() {
            continue;
        }
        rank += 1;
        let coef = u.iter().zip(f).map(|(&ui, &fi)| ui * fi).sum::<T>() / *s;
        for (xi, &vi) in x.iter_mut().zip(v) {
            *xi += coef * vi;
        }
    }
    let fitted = a.mul_vec(&x)?;
    let resid: Vec<T> = fitted.iter().zip(f).map(|(&p, &q)| p - q).collect();
    Ok(LsqSolution {
        solution: x,
        effective_rank: rank,
        residual_norm: norm(&resid),
        singular_values: dec.singular_values,
    })
}

/// `aᵀa`.
pub fn gram<T: Scalar>(a: &DenseMatrix<T>) -> DenseMatrix<T> {
    let n = a.cols;
    let mut g = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let s: T = (0..a.rows).map(|k| a.get(k, i) * a.get(k, j)).sum();
            g.set(i, j, s);
            g.set(j, i, s);
        }
    }
    g
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted nonincreasing.
pub fn symmetric_eigenvalues<T: Scalar>(m: &DenseMatrix<T>) -> Result<Vec<T>, LinalgError> {
    if m.rows != m.cols {
        return Err(LinalgError::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    let n = m.rows;
    let mut a = m.clone();
    let eps = T::epsilon();
    for _ in 0..MAX_SWEEPS {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j) * a.get(i, j))
            .sum();
        let total: T = a.data.iter().map(|&x| x * x).sum();
        if off <= eps * eps * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == T::zero() {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (apq + apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a.get(k, p), a.get(k, q));
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let (apk, aqk) = (a.get(p, k), a.get(q, k));
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    let mut eig: Vec<T> = (0..n).map(|i| a.get(i, i)).collect();
    eig.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    Ok(eig)
}

/// True iff the smallest eigenvalue exceeds `tol ×` the largest one (and the largest is positive).
pub fn is_positive_definite<T: Scalar>(m: &DenseMatrix<T>, tol: T) -> Result<bool, LinalgError> {
    check_tol(tol)?;
    if m.rows != m.cols {
        return Err(LinalgError::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    let scale = m.max_abs();
    for i in 0..m.rows {
        for j in i + 1..m.cols {
            let gap = (m.get(i, j) - m.get(j, i)).abs();
            if gap > tol * scale {
                return Err(LinalgError::Asymmetric {
                    row: i,
                    col: j,
                    gap: gap.to_f64_lossy(),
                });
            }
        }
    }
    let eig = symmetric_eigenvalues(m)?;
    let (hi, lo) = (eig[0], eig[eig.len() - 1]);
    Ok(hi > T::zero() && lo > tol * hi)
}

fn check_tol<T: Scalar>(tol: T) -> Result<(), LinalgError> {
    if !(tol > T::zero() && tol < T::one()) {
        return Err(LinalgError::InvalidTolerance(tol.to_f64_lossy()));
    }
    Ok(())
}
