//! Differentiable objectives over lists of parameter matrices.

mod mlp;
mod quadratic;
mod spiral;

pub use mlp::{Activation, MlpProblem, MlpSpec};
pub use quadratic::{build_kronecker_quadratic, QuadraticSpec};
pub use spiral::{from_polar, SpiralSpec, SPIRAL_ORIGIN_CUTOFF};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// A ready-to-evaluate objective.
#[derive(Debug, Clone, PartialEq)]
pub enum Landscape {
    /// One parameter matrix of `QuadraticSpec::param_shape`.
    Quadratic(QuadraticSpec),
    /// One `2 x 1` parameter holding `(x, y)`.
    Spiral(SpiralSpec),
    /// One parameter per layer.
    Mlp(MlpProblem),
}

impl Landscape {
    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        match self {
            Landscape::Quadratic(q) => vec![q.param_shape()],
            Landscape::Spiral(_) => vec![(2, 1)],
            Landscape::Mlp(p) => p.spec().weight_shapes(),
        }
    }

    /// Number of samples a batch may index, when the objective is data-driven.
    pub fn n_samples(&self) -> Option<usize> {
        match self {
            Landscape::Mlp(p) => Some(p.n_samples()),
            _ => None,
        }
    }

    /// Exact Hessian over the column-major flattening, when available.
    pub fn hessian(&self) -> Option<&Matrix> {
        match self {
            Landscape::Quadratic(q) => Some(q.hessian()),
            _ => None,
        }
    }

    pub fn loss_and_grad(
        &self,
        params: &[Matrix],
        batch: Option<&[usize]>,
    ) -> Result<(f64, Vec<Matrix>)> {
        match self {
            Landscape::Quadratic(q) => {
                let w = single(params, q.param_shape())?;
                let (loss, g) = q.eval_matrix(w)?;
                Ok((loss, vec![g]))
            }
            Landscape::Spiral(s) => {
                let w = single(params, (2, 1))?;
                let (loss, g) = s.eval([w[(0, 0)], w[(1, 0)]])?;
                Ok((loss, vec![Matrix::column(&g)?]))
            }
            Landscape::Mlp(p) => p.eval(params, batch),
        }
    }

    /// Full-objective loss.
    pub fn loss(&self, params: &[Matrix]) -> Result<f64> {
        match self {
            Landscape::Spiral(s) => {
                let w = single(params, (2, 1))?;
                let (x, y) = (w[(0, 0)], w[(1, 0)]);
                Ok(s.loss_polar(x.hypot(y), y.atan2(x)))
            }
            _ => Ok(self.loss_and_grad(params, None)?.0),
        }
    }
}

fn single(params: &[Matrix], shape: (usize, usize)) -> Result<&Matrix> {
    match params {
        [w] if w.shape() == shape => Ok(w),
        [w] => Err(Error::ShapeMismatch {
            op: "landscape",
            left: shape,
            right: w.shape(),
        }),
        _ => Err(Error::ShapeMismatch {
            op: "landscape",
            left: (1, 1),
            right: (params.len(), 1),
        }),
    }
}
