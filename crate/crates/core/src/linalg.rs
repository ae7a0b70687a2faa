//! Dense linear algebra kernels.
//!
//! Row-major `f64` matrices and the handful of factorizations the optimizers
//! and oracles need: Householder QR, one-step power iteration, cyclic Jacobi
//! for symmetric eigenproblems, Kronecker products and the entrywise (1,1)-norm.
//!
//! Every reduction runs in a fixed order with no internal parallelism, so
//! results are bit-reproducible across runs and platforms with IEEE-754 `f64`.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column norms below this are treated as linearly dependent during QR.
pub const RANK_TOLERANCE: f64 = 1e-12;
/// Relative off-diagonal Frobenius norm at which Jacobi sweeps stop.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
/// Upper bound on cyclic Jacobi sweeps.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Largest entrywise asymmetry accepted by the symmetric eigensolver.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// A dense matrix stored in row-major order.
///
/// Public constructors reject non-finite entries. Arithmetic results are not
/// re-validated; use [`Matrix::is_finite`] where divergence matters.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Builds a matrix from row-major data.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidData(format!(
                "dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidData(format!(
                "expected {} entries for {rows}x{cols}, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                row: k / cols,
                col: k % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n * m);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != m {
                return Err(Error::InvalidData(format!(
                    "row {i} has {} entries, expected {m}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(n, m, data)
    }

    /// An `n x 1` column vector.
    pub fn column(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    /// Builds a matrix from the column-major stacking `vec(W)`.
    pub fn from_col_major(rows: usize, cols: usize, v: &[f64]) -> Result<Self> {
        if v.len() != rows * cols {
            return Err(Error::InvalidData(format!(
                "expected {} entries for {rows}x{cols}, got {}",
                rows * cols,
                v.len()
            )));
        }
        let mut m = Self::new(rows, cols, vec![0.0; rows * cols])?;
        for j in 0..cols {
            for i in 0..rows {
                m[(i, j)] = v[j * rows + i];
            }
        }
        if let Some(k) = m.data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                row: k / cols,
                col: k % cols,
            });
        }
        Ok(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let mut data = vec![0.0; n * n];
        for (i, &v) in values.iter().enumerate() {
            data[i * n + i] = v;
        }
        Self::new(n, n, data)
    }

    /// Unchecked constructor for kernel outputs.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self.data[i * self.cols + i])
            .collect()
    }

    /// Column-major stacking, `vec(W)`.
    pub fn col_major_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                v.push(self.data[i * self.cols + j]);
            }
        }
        v
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Matrix::from_raw(self.cols, self.rows, out)
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        matmul(self, other)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix::from_raw(self.rows, self.cols, self.data.iter().map(|&x| f(x)).collect())
    }

    /// Entrywise combination of two equally shaped matrices.
    pub fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        self.expect_same_shape("zip_map", other)?;
        Ok(self.zip_map_unchecked(other, f))
    }

    pub(crate) fn zip_map_unchecked(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        debug_assert_eq!(self.shape(), other.shape());
        Matrix::from_raw(
            self.rows,
            self.cols,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|x| x * s)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest `|a_ij - a_ji|`; the matrix must be square.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.rows;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrized(&self) -> Matrix {
        let t = self.transpose();
        self.zip_map_unchecked(&t, |a, b| 0.5 * (a + b))
    }

    pub(crate) fn expect_same_shape(&self, op: &'static str, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    pub(crate) fn expect_square(&self, op: &'static str) -> Result<()> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                op,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Matrix product. Each output entry accumulates over the inner index in
/// increasing order starting from `0.0`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a.data[i * k + p];
            let brow = &b.data[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Ok(Matrix::from_raw(n, m, out))
}

/// `aᵀ·b` without materializing the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::ShapeMismatch {
            op: "matmul_tn",
            left: a.shape(),
            right: b.shape(),
        });
    }
    matmul(&a.transpose(), b)
}

/// `a·bᵀ`.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::ShapeMismatch {
            op: "matmul_nt",
            left: a.shape(),
            right: b.shape(),
        });
    }
    matmul(a, &b.transpose())
}

/// Thin QR factorization: `q` is `m x n` with orthonormal columns and `r` is
/// `n x n` upper triangular with a non-negative diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Qr {
    pub q: Matrix,
    pub r: Matrix,
}

/// Householder QR of a tall (or square) matrix.
///
/// The diagonal of `R` is forced non-negative, which makes the factorization
/// unique for full-column-rank input.
pub fn qr_decompose(a: &Matrix) -> Result<Qr> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::TooFewRows {
            op: "qr_decompose",
            rows: m,
            cols: n,
        });
    }
    let mut work = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);

    for k in 0..n {
        let norm = (k..m).map(|i| work[(i, k)] * work[(i, k)]).sum::<f64>().sqrt();
        if norm < RANK_TOLERANCE {
            return Err(Error::RankDeficient { column: k, norm });
        }
        let x0 = work[(k, k)];
        let tail: f64 = ((k + 1)..m).map(|i| work[(i, k)] * work[(i, k)]).sum();
        if tail == 0.0 {
            // Already upper-triangular in this column: no reflection.
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| work[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        for j in k..n {
            let dot: f64 = v.iter().enumerate().map(|(t, vi)| vi * work[(k + t, j)]).sum();
            let f = 2.0 * dot / vnorm2;
            for (t, vi) in v.iter().enumerate() {
                work[(k + t, j)] -= f * vi;
            }
        }
        // Column k below the diagonal is now zero up to rounding.
        work[(k, k)] = alpha;
        for i in (k + 1)..m {
            work[(i, k)] = 0.0;
        }
        let scale = (2.0 / vnorm2).sqrt();
        reflectors.push(v.into_iter().map(|x| x * scale).collect());
    }

    // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of I.
    let mut q = Matrix::zeros(m, n);
    for j in 0..n {
        q[(j, j)] = 1.0;
    }
    for k in (0..n).rev() {
        let v = &reflectors[k];
        if v.is_empty() {
            continue;
        }
        for j in 0..n {
            let dot: f64 = v.iter().enumerate().map(|(t, vi)| vi * q[(k + t, j)]).sum();
            for (t, vi) in v.iter().enumerate() {
                q[(k + t, j)] -= dot * vi;
            }
        }
    }

    let mut r = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            r[(i, j)] = work[(i, j)];
        }
    }
    for i in 0..n {
        if r[(i, i)] < 0.0 {
            for j in i..n {
                r[(i, j)] = -r[(i, j)];
            }
            for row in 0..m {
                q[(row, i)] = -q[(row, i)];
            }
        }
    }
    Ok(Qr { q, r })
}

/// One step of orthogonal (subspace) iteration: the Q factor of `a·q`.
pub fn power_qr_step(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    a.expect_square("power_qr_step")?;
    if q.rows() != a.rows() || !q.is_square() {
        return Err(Error::ShapeMismatch {
            op: "power_qr_step",
            left: a.shape(),
            right: q.shape(),
        });
    }
    Ok(qr_decompose(&matmul(a, q)?)?.q)
}

/// Eigen-decomposition of a symmetric matrix: `a = V diag(values) Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, matching `values`.
    pub vectors: Matrix,
}

impl SymmetricEigen {
    /// `V diag(λ) Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.values.len();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for (k, lam) in self.values.iter().enumerate() {
                    s += self.vectors[(i, k)] * lam * self.vectors[(j, k)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Eigenvalues come back in descending order; each eigenvector is signed so
/// its largest-magnitude entry is positive.
pub fn jacobi_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    a.expect_square("jacobi_eigen")?;
    let n = a.rows();
    let asym = a.max_asymmetry();
    if asym > SYMMETRY_TOLERANCE * a.max_abs().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let mut s = a.symmetrized();
    let mut v = Matrix::identity(n);
    let tol = JACOBI_TOLERANCE * a.frobenius_norm();

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&s) <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = s[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (s[(q, q)] - s[(p, p)]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = s[(k, p)];
                    let akq = s[(k, q)];
                    s[(k, p)] = c * akp - sn * akq;
                    s[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = s[(p, k)];
                    let aqk = s[(q, k)];
                    s[(p, k)] = c * apk - sn * aqk;
                    s[(q, k)] = sn * apk + c * aqk;
                }
                s[(p, q)] = 0.0;
                s[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let diag = s.diagonal();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));

    let mut vectors = Matrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(diag[src]);
        let col = v.col(src);
        let mut pivot = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (i, x) in col.iter().enumerate() {
            vectors[(i, dst)] = sign * x;
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Kronecker product `a ⊗ b`.
pub fn kronecker(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let cols = ac * bc;
    let mut out = vec![0.0; ar * br * cols];
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k) * cols + j * bc + l] = aij * b[(k, l)];
                }
            }
        }
    }
    Matrix::from_raw(ar * br, cols, out)
}

/// Entrywise (1,1)-norm: the sum of absolute values of all entries.
pub fn one_one_norm(a: &Matrix) -> f64 {
    a.as_slice().iter().map(|x| x.abs()).sum()
}

/// `‖QᵀQ − I‖_F`.
pub fn orthonormality_error(q: &Matrix) -> f64 {
    let qtq = matmul(&q.transpose(), q).expect("QᵀQ shapes always agree");
    let n = qtq.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = qtq[(i, j)] - if i == j { 1.0 } else { 0.0 };
            s += d * d;
        }
    }
    s.sqrt()
}

/// Planar rotation by `deg` degrees.
pub fn rotation_2d(deg: f64) -> Matrix {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix::from_raw(2, 2, vec![c, -s, s, c])
}

/// Largest principal angle (radians) between each column of `a` and the
/// matching column of `b`, ignoring sign.
pub fn max_column_angle(a: &Matrix, b: &Matrix) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..a.cols().min(b.cols()) {
        let (ca, cb) = (a.col(j), b.col(j));
        let dot: f64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
        let na = ca.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = cb.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cos = (dot.abs() / (na * nb)).min(1.0);
        // Sine from the orthogonal residual; 1 - cos² cancels catastrophically.
        let proj = dot / (nb * nb);
        let resid: f64 = ca
            .iter()
            .zip(&cb)
            .map(|(x, y)| (x - proj * y).powi(2))
            .sum::<f64>()
            .sqrt();
        let sin = resid / na;
        worst = worst.max(sin.atan2(cos));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(matches!(
            Matrix::new(2, 2, vec![1.0, 2.0, 3.0]),
            Err(Error::InvalidData(_))
        ));
        assert_eq!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]).unwrap_err(),
            Error::NonFinite { row: 0, col: 1 }
        );
        assert!(Matrix::new(0, 3, vec![]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&Matrix::identity(2), &a).unwrap(), a);
        let b = m(&[&[5.0], &[6.0]]);
        assert_eq!(matmul(&a, &b).unwrap(), m(&[&[17.0], &[39.0]]));
    }

    #[test]
    fn matmul_reports_both_shapes() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        assert_eq!(
            err,
            Error::ShapeMismatch {
                op: "matmul",
                left: (2, 3),
                right: (2, 3)
            }
        );
    }

    #[test]
    fn qr_of_identity() {
        let qr = qr_decompose(&Matrix::identity(3)).unwrap();
        assert_eq!(qr.q, Matrix::identity(3));
        assert_eq!(qr.r, Matrix::identity(3));
    }

    #[test]
    fn qr_hand_case() {
        let qr = qr_decompose(&m(&[&[3.0, 1.0], &[4.0, 0.0]])).unwrap();
        assert!((qr.q[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((qr.q[(1, 0)] - 0.8).abs() < 1e-15);
        assert!((qr.r[(0, 0)] - 5.0).abs() < 1e-14);
        // second column by Gram-Schmidt: r01 = q0·a1 = 0.6, residual (0.64,-0.48)
        assert!((qr.r[(0, 1)] - 0.6).abs() < 1e-14);
        assert!((qr.r[(1, 1)] - 0.8).abs() < 1e-14);
    }

    #[test]
    fn qr_rank_deficiency_names_column() {
        let a = m(&[&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]]);
        match qr_decompose(&a) {
            Err(Error::RankDeficient { column, .. }) => assert_eq!(column, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            qr_decompose(&Matrix::zeros(2, 3)),
            Err(Error::TooFewRows { .. })
        ));
    }

    #[test]
    fn power_step_fixed_points() {
        let d = Matrix::from_diag(&[3.0, 1.0]).unwrap();
        assert_eq!(power_qr_step(&d, &Matrix::identity(2)).unwrap(), Matrix::identity(2));

        let q = rotation_2d(30.0);
        let out = power_qr_step(&Matrix::identity(2), &q).unwrap();
        for j in 0..2 {
            let sign = (out[(0, j)] * q[(0, j)] + out[(1, j)] * q[(1, j)]).signum();
            for i in 0..2 {
                assert!((out[(i, j)] - sign * q[(i, j)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn jacobi_diagonal_and_two_by_two() {
        let e = jacobi_eigen(&Matrix::from_diag(&[5.0, 2.0, 1.0]).unwrap()).unwrap();
        assert_eq!(e.values, vec![5.0, 2.0, 1.0]);
        assert_eq!(e.vectors, Matrix::identity(3));

        let e = jacobi_eigen(&m(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[(0, 0)] - h).abs() < 1e-14);
        assert!((e.vectors[(1, 0)] - h).abs() < 1e-14);
        // (1,-1)/√2 with its largest-magnitude entry positive: tie keeps the first.
        assert!((e.vectors[(0, 1)].abs() - h).abs() < 1e-14);
        assert!((e.vectors[(0, 1)] + e.vectors[(1, 1)]).abs() < 1e-14);
    }

    #[test]
    fn jacobi_rejects_asymmetric() {
        let err = jacobi_eigen(&m(&[&[1.0, 2.0], &[0.0, 1.0]])).unwrap_err();
        assert!(matches!(err, Error::NotSymmetric { .. }));
        assert!(matches!(
            jacobi_eigen(&Matrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn kronecker_hand_cases() {
        assert_eq!(
            kronecker(&Matrix::identity(2), &Matrix::identity(3)),
            Matrix::identity(6)
        );
        let a = m(&[&[1.0, 2.0]]);
        let b = m(&[&[3.0], &[4.0]]);
        assert_eq!(kronecker(&a, &b), m(&[&[3.0, 6.0], &[4.0, 8.0]]));
    }

    #[test]
    fn one_one_norm_hand_cases() {
        assert_eq!(one_one_norm(&Matrix::from_diag(&[3.0, -1.0]).unwrap()), 4.0);
        assert_eq!(one_one_norm(&m(&[&[1.0, -2.0], &[3.0, -4.0]])), 10.0);
    }

    #[test]
    fn col_major_roundtrip() {
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        assert_eq!(a.col_major_vec(), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(Matrix::from_col_major(2, 3, &a.col_major_vec()).unwrap(), a);
    }
}
