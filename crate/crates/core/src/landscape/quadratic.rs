use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, jacobi_eigen, kronecker, rotation_2d, Matrix};

/// `f(w) = ½ wᵀ H w` with `H = R diag(λ) Rᵀ`.
///
/// Matrix-shaped parameters `W` (rows x cols) are flattened column-major,
/// `w = vec(W)`, so a Kronecker Hessian `A ⊗ B` has `A` acting on the column
/// index and `B` on the row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSpec {
    eigenvalues: Vec<f64>,
    rotation: Matrix,
    rotation_angle_deg: Option<f64>,
    hessian: Matrix,
    param_shape: (usize, usize),
    factors: Option<(Matrix, Matrix)>,
}

impl QuadraticSpec {
    /// General constructor from a spectrum and an orthogonal eigenbasis.
    pub fn new(eigenvalues: Vec<f64>, rotation: Matrix) -> Result<Self> {
        let n = eigenvalues.len();
        if rotation.shape() != (n, n) {
            return Err(Error::ShapeMismatch {
                op: "QuadraticSpec::new",
                left: (n, n),
                right: rotation.shape(),
            });
        }
        if eigenvalues.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidData(
                "quadratic eigenvalues must be finite and positive".into(),
            ));
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidData(
                "quadratic eigenvalues must be in descending order".into(),
            ));
        }
        if linalg::orthonormality_error(&rotation) > 1e-10 {
            return Err(Error::InvalidData("rotation is not orthogonal".into()));
        }
        let hessian = conjugate_diag(&rotation, &eigenvalues);
        Ok(Self {
            eigenvalues,
            rotation,
            rotation_angle_deg: None,
            hessian,
            param_shape: (n, 1),
            factors: None,
        })
    }

    /// Two-dimensional quadratic whose eigenbasis is the standard basis
    /// rotated by `angle_deg`. An angle of zero gives a diagonal Hessian.
    pub fn planar(eigenvalues: [f64; 2], angle_deg: f64) -> Result<Self> {
        let mut spec = Self::new(eigenvalues.to_vec(), rotation_2d(angle_deg))?;
        spec.rotation_angle_deg = Some(angle_deg);
        if angle_deg == 0.0 {
            spec.hessian = Matrix::from_diag(&eigenvalues)?;
        }
        Ok(spec)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn rotation(&self) -> &Matrix {
        &self.rotation
    }

    pub fn rotation_angle_deg(&self) -> Option<f64> {
        self.rotation_angle_deg
    }

    pub fn hessian(&self) -> &Matrix {
        &self.hessian
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Shape of the parameter matrix `W` with `vec(W) = w`.
    pub fn param_shape(&self) -> (usize, usize) {
        self.param_shape
    }

    /// `(A, B)` when built by [`build_kronecker_quadratic`].
    pub fn factors(&self) -> Option<(&Matrix, &Matrix)> {
        self.factors.as_ref().map(|(a, b)| (a, b))
    }

    /// Loss `½wᵀHw` and gradient `Hw`.
    pub fn eval(&self, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.dim();
        if w.len() != n {
            return Err(Error::ShapeMismatch {
                op: "quadratic_eval",
                left: (n, 1),
                right: (w.len(), 1),
            });
        }
        let mut grad = vec![0.0; n];
        for (i, g) in grad.iter_mut().enumerate() {
            *g = self.hessian.row(i).iter().zip(w).map(|(h, x)| h * x).sum();
        }
        let loss = 0.5 * w.iter().zip(&grad).map(|(x, g)| x * g).sum::<f64>();
        Ok((loss, grad))
    }

    /// [`eval`](Self::eval) on a parameter matrix, gradient in the same shape.
    pub fn eval_matrix(&self, w: &Matrix) -> Result<(f64, Matrix)> {
        if w.shape() != self.param_shape {
            return Err(Error::ShapeMismatch {
                op: "quadratic_eval",
                left: self.param_shape,
                right: w.shape(),
            });
        }
        let (loss, g) = self.eval(&w.col_major_vec())?;
        let (r, c) = self.param_shape;
        Ok((loss, Matrix::from_col_major(r, c, &g).unwrap_or_else(|_| nan_matrix(r, c))))
    }

    /// Maps eigen-coordinates `z` to the original coordinates `R z`.
    pub fn from_eigen_coordinates(&self, z: &[f64]) -> Result<Vec<f64>> {
        let col = Matrix::column(z)?;
        Ok(linalg::matmul(&self.rotation, &col)?.into_vec())
    }
}

fn nan_matrix(rows: usize, cols: usize) -> Matrix {
    Matrix::from_raw(rows, cols, vec![f64::NAN; rows * cols])
}

fn conjugate_diag(r: &Matrix, lambda: &[f64]) -> Matrix {
    let n = lambda.len();
    let mut h = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for (k, l) in lambda.iter().enumerate() {
                s += r[(i, k)] * l * r[(j, k)];
            }
            h[(i, j)] = s;
        }
    }
    h.symmetrized()
}

/// Quadratic with Kronecker Hessian `H = A ⊗ B` over an `m x n` parameter,
/// where `A` is `n x n` and `B` is `m x m`.
///
/// The eigenbasis is `V ⊗ U` from the exact factor eigenbases, with columns
/// ordered by descending eigenvalue product.
pub fn build_kronecker_quadratic(a: &Matrix, b: &Matrix) -> Result<QuadraticSpec> {
    let ea = jacobi_eigen(a)?;
    let eb = jacobi_eigen(b)?;
    let psd_floor = -1e-12 * (a.max_abs().max(b.max_abs())).max(1.0);
    if ea.values.iter().chain(&eb.values).any(|&l| l < psd_floor) {
        return Err(Error::InvalidData("Kronecker factors must be PSD".into()));
    }
    let basis = kronecker(&ea.vectors, &eb.vectors);
    let m = b.rows();
    let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(a.rows() * m);
    for (i, la) in ea.values.iter().enumerate() {
        for (j, lb) in eb.values.iter().enumerate() {
            pairs.push((la * lb, i * m + j));
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    let dim = pairs.len();
    let mut rotation = Matrix::zeros(dim, dim);
    for (dst, &(_, src)) in pairs.iter().enumerate() {
        for row in 0..dim {
            rotation[(row, dst)] = basis[(row, src)];
        }
    }
    let a_sym = a.symmetrized();
    let b_sym = b.symmetrized();
    Ok(QuadraticSpec {
        eigenvalues: pairs.iter().map(|p| p.0).collect(),
        rotation,
        rotation_angle_deg: None,
        hessian: kronecker(&a_sym, &b_sym),
        param_shape: (m, a.rows()),
        factors: Some((a_sym, b_sym)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimum_and_hand_case() {
        let q = QuadraticSpec::planar([10.0, 1.0], 45.0).unwrap();
        assert_eq!(q.eval(&[0.0, 0.0]).unwrap(), (0.0, vec![0.0, 0.0]));

        let q = QuadraticSpec::new(vec![2.0, 2.0], Matrix::identity(2)).unwrap();
        assert_eq!(q.eval(&[1.0, 1.0]).unwrap(), (2.0, vec![2.0, 2.0]));
    }

    #[test]
    fn aligned_planar_is_diagonal() {
        let q = QuadraticSpec::planar([10.0, 1.0], 0.0).unwrap();
        assert_eq!(q.hessian(), &Matrix::from_diag(&[10.0, 1.0]).unwrap());
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(QuadraticSpec::new(vec![1.0, 2.0], Matrix::identity(2)).is_err());
        assert!(QuadraticSpec::new(vec![1.0, -2.0], Matrix::identity(2)).is_err());
        assert!(QuadraticSpec::new(vec![1.0], Matrix::identity(2)).is_err());
        let q = QuadraticSpec::planar([1.0, 1.0], 0.0).unwrap();
        assert!(q.eval(&[1.0]).is_err());
    }

    #[test]
    fn kronecker_quadratic_hand_cases() {
        let q = build_kronecker_quadratic(&Matrix::identity(2), &Matrix::identity(2)).unwrap();
        assert_eq!(q.hessian(), &Matrix::identity(4));

        let a = Matrix::from_diag(&[2.0, 1.0]).unwrap();
        let b = Matrix::from_diag(&[3.0, 1.0]).unwrap();
        let q = build_kronecker_quadratic(&a, &b).unwrap();
        assert_eq!(q.hessian(), &Matrix::from_diag(&[6.0, 2.0, 3.0, 1.0]).unwrap());
        assert_eq!(q.eigenvalues(), &[6.0, 3.0, 2.0, 1.0]);
        assert_eq!(q.param_shape(), (2, 2));
    }

    #[test]
    fn kronecker_rejects_asymmetric_factor() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(build_kronecker_quadratic(&a, &Matrix::identity(2)).is_err());
    }

    #[test]
    fn matrix_gradient_matches_kronecker_identity() {
        // H vec(W) = vec(B W A) for symmetric A, B.
        let a = Matrix::from_rows(&[[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 3.0]]).unwrap();
        let b = Matrix::from_rows(&[[1.5, -0.3], [-0.3, 0.7]]).unwrap();
        let q = build_kronecker_quadratic(&a, &b).unwrap();
        let w = Matrix::from_rows(&[[1.0, -2.0, 0.5], [0.3, 0.0, 1.2]]).unwrap();
        let (_, g) = q.eval_matrix(&w).unwrap();
        let bwa = b.matmul(&w).unwrap().matmul(&a).unwrap();
        for (x, y) in g.as_slice().iter().zip(bwa.as_slice()) {
            assert!((x - y).abs() < 1e-13);
        }
    }
}
