//! Eigenbasis estimation over the (source, geometry) design space.
//!
//! The *second*-moment source keeps EMAs `L ≈ E[GGᵀ]` and `R ≈ E[GᵀG]`; the
//! *first*-moment source reads `MMᵀ` and `MᵀM` from the optimizer's live
//! momentum at refresh time and stores nothing. *Bilateral* geometry rotates
//! both sides of the parameter; *unilateral* rotates only the smaller side
//! (the row side on ties).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigen, matmul_nt, matmul_tn, orthonormality_error, power_qr_step, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Unilateral,
    Bilateral,
}

/// `update_frequency = u64::MAX` never refreshes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    pub source: Source,
    pub geometry: Geometry,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_frequency")]
    pub update_frequency: u64,
}

fn default_beta2() -> f64 {
    0.999
}

fn default_frequency() -> u64 {
    10
}

impl EstimationConfig {
    pub fn new(source: Source, geometry: Geometry) -> Self {
        Self {
            source,
            geometry,
            beta2: default_beta2(),
            update_frequency: default_frequency(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::config("estimation.beta2", "must lie in (0, 1)"));
        }
        if self.update_frequency == 0 {
            return Err(Error::config("estimation.update_frequency", "must be at least 1"));
        }
        Ok(())
    }

    /// Whether the row (`U`) and column (`V`) sides of an `m x n` parameter rotate.
    pub fn sides(&self, m: usize, n: usize) -> (bool, bool) {
        match self.geometry {
            Geometry::Bilateral => (true, true),
            Geometry::Unilateral if m <= n => (true, false),
            Geometry::Unilateral => (false, true),
        }
    }

    /// Refresh schedule on the 1-based step counter.
    pub fn is_refresh_step(&self, step: u64) -> bool {
        self.update_frequency != u64::MAX && step.is_multiple_of(self.update_frequency)
    }
}

/// Rotation bases and statistics for one `m x n` parameter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisState {
    u: Matrix,
    v: Matrix,
    l: Option<Matrix>,
    r: Option<Matrix>,
    rotate_rows: bool,
    rotate_cols: bool,
    warnings: u64,
}

impl BasisState {
    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn l(&self) -> Option<&Matrix> {
        self.l.as_ref()
    }

    pub fn r(&self) -> Option<&Matrix> {
        self.r.as_ref()
    }

    /// Refreshes skipped because a statistic was zero or rank-deficient.
    pub fn warnings(&self) -> u64 {
        self.warnings
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.u.rows(), self.v.rows())
    }

    /// Replaces both bases; they must be orthogonal and sized `m x m`, `n x n`.
    pub fn set_bases(&mut self, u: Matrix, v: Matrix) -> Result<()> {
        let (m, n) = self.shape();
        for (basis, k) in [(&u, m), (&v, n)] {
            if basis.shape() != (k, k) {
                return Err(Error::ShapeMismatch {
                    op: "set_bases",
                    left: (k, k),
                    right: basis.shape(),
                });
            }
            if orthonormality_error(basis) > 1e-8 {
                return Err(Error::InvalidData("basis is not orthonormal".into()));
            }
        }
        self.u = u;
        self.v = v;
        Ok(())
    }

    /// `Uᵀ X V`.
    pub fn rotate(&self, x: &Matrix) -> Result<Matrix> {
        let left = if self.rotate_rows { matmul_tn(&self.u, x)? } else { x.clone() };
        if self.rotate_cols {
            left.matmul(&self.v)
        } else {
            Ok(left)
        }
    }

    /// `U X Vᵀ`.
    pub fn unrotate(&self, x: &Matrix) -> Result<Matrix> {
        let left = if self.rotate_rows { self.u.matmul(x)? } else { x.clone() };
        if self.rotate_cols {
            matmul_nt(&left, &self.v)
        } else {
            Ok(left)
        }
    }
}

pub fn init_basis(m: usize, n: usize, config: &EstimationConfig) -> BasisState {
    let (rotate_rows, rotate_cols) = config.sides(m, n);
    let second = config.source == Source::Second;
    BasisState {
        u: Matrix::identity(m),
        v: Matrix::identity(n),
        l: (second && rotate_rows).then(|| Matrix::zeros(m, m)),
        r: (second && rotate_cols).then(|| Matrix::zeros(n, n)),
        rotate_rows,
        rotate_cols,
        warnings: 0,
    }
}

/// EMA update of `L` and `R`. A no-op for the first-moment source.
pub fn accumulate_statistics(state: &mut BasisState, g: &Matrix, config: &EstimationConfig) -> Result<()> {
    if g.shape() != state.shape() {
        return Err(Error::ShapeMismatch {
            op: "accumulate_statistics",
            left: state.shape(),
            right: g.shape(),
        });
    }
    let b = config.beta2;
    if let Some(l) = state.l.as_mut() {
        let ggt = matmul_nt(g, g)?;
        *l = l.zip_map_unchecked(&ggt, |x, y| b * x + (1.0 - b) * y).symmetrized();
    }
    if let Some(r) = state.r.as_mut() {
        let gtg = matmul_tn(g, g)?;
        *r = r.zip_map_unchecked(&gtg, |x, y| b * x + (1.0 - b) * y).symmetrized();
    }
    Ok(())
}

fn statistics(state: &BasisState, momentum: &Matrix, config: &EstimationConfig) -> Result<(Option<Matrix>, Option<Matrix>)> {
    if momentum.shape() != state.shape() {
        return Err(Error::ShapeMismatch {
            op: "refresh_basis",
            left: state.shape(),
            right: momentum.shape(),
        });
    }
    Ok(match config.source {
        Source::Second => (state.l.clone(), state.r.clone()),
        Source::First => (
            state.rotate_rows.then(|| matmul_nt(momentum, momentum)).transpose()?,
            state.rotate_cols.then(|| matmul_tn(momentum, momentum)).transpose()?,
        ),
    })
}

/// One power-iteration step per rotated side. A side whose statistic is zero
/// or rank-deficient keeps its previous basis and bumps the warning counter.
pub fn refresh_basis(state: &mut BasisState, momentum: &Matrix, config: &EstimationConfig) -> Result<()> {
    let (l, r) = statistics(state, momentum, config)?;
    if let Some(l) = l {
        refresh_side(&mut state.u, &l, &mut state.warnings)?;
    }
    if let Some(r) = r {
        refresh_side(&mut state.v, &r, &mut state.warnings)?;
    }
    Ok(())
}

fn refresh_side(basis: &mut Matrix, stat: &Matrix, warnings: &mut u64) -> Result<()> {
    if stat.max_abs() == 0.0 {
        *warnings += 1;
        return Ok(());
    }
    match power_qr_step(stat, basis) {
        Ok(q) => *basis = q,
        Err(Error::RankDeficient { .. }) => *warnings += 1,
        Err(e) => return Err(e),
    }
    Ok(())
}

/// Test oracle: replaces each rotated side by the exact eigenvectors of its
/// statistic.
pub fn refresh_basis_exact(state: &mut BasisState, momentum: &Matrix, config: &EstimationConfig) -> Result<()> {
    let (l, r) = statistics(state, momentum, config)?;
    if let Some(l) = l {
        state.u = jacobi_eigen(&l)?.vectors;
    }
    if let Some(r) = r {
        state.v = jacobi_eigen(&r)?.vectors;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_column_angle, rotation_2d};

    fn second_bi(beta2: f64) -> EstimationConfig {
        EstimationConfig {
            beta2,
            update_frequency: 1,
            ..EstimationConfig::new(Source::Second, Geometry::Bilateral)
        }
    }

    #[test]
    fn init_is_identity() {
        let s = init_basis(3, 5, &second_bi(0.9));
        assert_eq!(s.u(), &Matrix::identity(3));
        assert_eq!(s.v(), &Matrix::identity(5));
        assert_eq!(s.l().unwrap(), &Matrix::zeros(3, 3));
    }

    #[test]
    fn first_ema_update_from_zero() {
        let cfg = second_bi(0.9);
        let mut s = init_basis(2, 3, &cfg);
        let g = Matrix::from_rows(&[[1.0, 2.0, 0.0], [0.0, -1.0, 3.0]]).unwrap();
        accumulate_statistics(&mut s, &g, &cfg).unwrap();
        let expect = matmul_nt(&g, &g).unwrap().scale(1.0 - 0.9);
        assert_eq!(s.l().unwrap(), &expect);
    }

    #[test]
    fn zero_gradient_decays() {
        let cfg = second_bi(0.5);
        let mut s = init_basis(2, 2, &cfg);
        accumulate_statistics(&mut s, &Matrix::identity(2), &cfg).unwrap();
        let before = s.l().unwrap().clone();
        accumulate_statistics(&mut s, &Matrix::zeros(2, 2), &cfg).unwrap();
        assert_eq!(s.l().unwrap(), &before.scale(0.5));
    }

    #[test]
    fn rank_one_with_zero_beta() {
        let cfg = EstimationConfig { beta2: 0.0, ..second_bi(0.5) };
        let mut s = init_basis(2, 3, &cfg);
        let u = [1.0, -2.0];
        let v = [0.5, 1.0, 2.0];
        let g = Matrix::from_rows(&[
            [u[0] * v[0], u[0] * v[1], u[0] * v[2]],
            [u[1] * v[0], u[1] * v[1], u[1] * v[2]],
        ])
        .unwrap();
        accumulate_statistics(&mut s, &g, &cfg).unwrap();
        let vv: f64 = v.iter().map(|x| x * x).sum();
        for i in 0..2 {
            for j in 0..2 {
                assert!((s.l().unwrap()[(i, j)] - vv * u[i] * u[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn geometric_series() {
        let cfg = second_bi(0.8);
        let mut s = init_basis(2, 2, &cfg);
        let g = Matrix::from_rows(&[[1.0, 0.5], [0.25, 2.0]]).unwrap();
        for _ in 0..7 {
            accumulate_statistics(&mut s, &g, &cfg).unwrap();
        }
        let expect = matmul_nt(&g, &g).unwrap().scale(1.0 - 0.8f64.powi(7));
        for (a, b) in s.l().unwrap().as_slice().iter().zip(expect.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_statistics_keep_basis() {
        let cfg = second_bi(0.9);
        let mut s = init_basis(2, 2, &cfg);
        refresh_basis(&mut s, &Matrix::zeros(2, 2), &cfg).unwrap();
        assert_eq!(s.u(), &Matrix::identity(2));
        assert_eq!(s.warnings(), 2);
    }

    #[test]
    fn diagonal_statistic_is_fixed_point() {
        let cfg = second_bi(0.0001);
        let mut s = init_basis(2, 2, &cfg);
        let g = Matrix::from_diag(&[3.0, 1.0]).unwrap();
        accumulate_statistics(&mut s, &g, &cfg).unwrap();
        refresh_basis(&mut s, &g, &cfg).unwrap();
        assert_eq!(s.u(), &Matrix::identity(2));
    }

    #[test]
    fn converges_to_rotated_eigenbasis() {
        let cfg = second_bi(0.5);
        let mut s = init_basis(2, 2, &cfg);
        let r = rotation_2d(45.0);
        let target = r
            .matmul(&Matrix::from_diag(&[10.0, 1.0]).unwrap())
            .unwrap()
            .matmul(&r.transpose())
            .unwrap();
        s.l = Some(target.clone());
        for _ in 0..100 {
            refresh_basis(&mut s, &Matrix::zeros(2, 2), &cfg).unwrap();
        }
        let exact = jacobi_eigen(&target).unwrap().vectors;
        assert!(max_column_angle(s.u(), &exact) < 1e-6);
    }

    #[test]
    fn unilateral_never_touches_other_side() {
        let cfg = EstimationConfig {
            update_frequency: 1,
            ..EstimationConfig::new(Source::First, Geometry::Unilateral)
        };
        let mut s = init_basis(2, 3, &cfg);
        let m = Matrix::from_rows(&[[1.0, 2.0, 0.5], [0.3, -1.0, 3.0]]).unwrap();
        for _ in 0..5 {
            refresh_basis(&mut s, &m, &cfg).unwrap();
        }
        assert_eq!(s.v(), &Matrix::identity(3));
        assert_ne!(s.u(), &Matrix::identity(2));

        // Taller than wide: the column side rotates instead.
        let mut t = init_basis(3, 2, &cfg);
        refresh_basis(&mut t, &m.transpose(), &cfg).unwrap();
        assert_eq!(t.u(), &Matrix::identity(3));
        assert!(orthonormality_error(t.v()) < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let cfg = second_bi(0.9);
        let mut s = init_basis(2, 3, &cfg);
        assert!(accumulate_statistics(&mut s, &Matrix::zeros(3, 2), &cfg).is_err());
        assert!(refresh_basis(&mut s, &Matrix::zeros(3, 2), &cfg).is_err());
        assert!(EstimationConfig { update_frequency: 0, ..cfg }.validate().is_err());
    }
}
