use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matmul, matmul_nt, matmul_tn, Matrix};
use crate::rng::{SeededRng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
}

/// Fully connected network `H_{l+1} = act(H_l W_l)` with a linear output layer
/// and no biases. Weight `l` has shape `layer_dims[l] x layer_dims[l+1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub layer_dims: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default)]
    pub dataset_seed: u64,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    /// Ratio between the largest and smallest input variance. Inputs are
    /// standard normal, scaled per coordinate by log-spaced standard deviations
    /// from 1 down to `1/sqrt(input_condition)`, then mixed by a random
    /// orthogonal matrix. `1.0` leaves them isotropic.
    #[serde(default = "default_condition")]
    pub input_condition: f64,
}

fn default_activation() -> Activation {
    Activation::Tanh
}

fn default_samples() -> usize {
    256
}

fn default_condition() -> f64 {
    1.0
}

impl MlpSpec {
    pub fn new(layer_dims: Vec<usize>, dataset_seed: u64, n_samples: usize) -> Self {
        Self {
            layer_dims,
            activation: Activation::Tanh,
            dataset_seed,
            n_samples,
            input_condition: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::config("landscape.layer_dims", "needs at least two entries"));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::config("landscape.layer_dims", "entries must be positive"));
        }
        if self.n_samples == 0 {
            return Err(Error::config("landscape.n_samples", "must be positive"));
        }
        if !(self.input_condition >= 1.0 && self.input_condition.is_finite()) {
            return Err(Error::config("landscape.input_condition", "must be finite and >= 1"));
        }
        Ok(())
    }

    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        self.layer_dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// An [`MlpSpec`] together with its generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpProblem {
    spec: MlpSpec,
    x: Matrix,
    y: Matrix,
}

impl MlpProblem {
    /// Draws inputs, then the mixing rotation, then teacher weights, all from
    /// the dataset stream of `dataset_seed`. Targets are the teacher's outputs.
    pub fn new(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let d0 = spec.layer_dims[0];
        let mut rng = SeededRng::stream(spec.dataset_seed, Stream::Dataset);
        let z = rng.normal_matrix(spec.n_samples, d0, 1.0);
        let q = rng.orthogonal(d0);
        let scales = input_scales(d0, spec.input_condition);
        let mut zs = z;
        for i in 0..spec.n_samples {
            for (j, s) in scales.iter().enumerate() {
                zs[(i, j)] *= s;
            }
        }
        let x = matmul_nt(&zs, &q)?;
        let mut teacher = random_weights(&mut rng, &spec.weight_shapes());
        let mean_scale = scales.iter().sum::<f64>() / d0 as f64;
        teacher[0] = teacher[0].scale(1.0 / mean_scale);
        let y = forward(&teacher, &x)?.pop().unwrap_or_else(|| x.clone());
        Ok(Self { spec, x, y })
    }

    /// A problem over explicit data, for oracles.
    pub fn from_data(layer_dims: Vec<usize>, x: Matrix, y: Matrix) -> Result<Self> {
        let spec = MlpSpec::new(layer_dims, 0, x.rows());
        spec.validate()?;
        if x.cols() != spec.layer_dims[0] || y.cols() != *spec.layer_dims.last().unwrap_or(&0) {
            return Err(Error::ShapeMismatch {
                op: "MlpProblem::from_data",
                left: x.shape(),
                right: y.shape(),
            });
        }
        if x.rows() != y.rows() {
            return Err(Error::ShapeMismatch {
                op: "MlpProblem::from_data",
                left: x.shape(),
                right: y.shape(),
            });
        }
        Ok(Self { spec, x, y })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn inputs(&self) -> &Matrix {
        &self.x
    }

    pub fn targets(&self) -> &Matrix {
        &self.y
    }

    pub fn n_samples(&self) -> usize {
        self.x.rows()
    }

    /// `N(0, 1/fan_in)` weights from the init stream of `seed`.
    pub fn init_weights(&self, seed: u64) -> Vec<Matrix> {
        let mut rng = SeededRng::stream(seed, Stream::Init);
        random_weights(&mut rng, &self.spec.weight_shapes())
    }

    /// Mean squared error over `batch` (all samples when `None`) and its
    /// gradient with respect to every weight.
    pub fn eval(&self, weights: &[Matrix], batch: Option<&[usize]>) -> Result<(f64, Vec<Matrix>)> {
        self.check_shapes(weights)?;
        let (x, y) = match batch {
            None => (self.x.clone(), self.y.clone()),
            Some(idx) => (gather(&self.x, idx)?, gather(&self.y, idx)?),
        };
        let n = x.rows() as f64;
        let acts = forward(weights, &x)?;
        let out = &acts[acts.len() - 1];
        let resid = out.sub(&y)?;
        let loss = resid.sum_squares() / n;
        let mut delta = resid.scale(2.0 / n);
        let mut grads = vec![Matrix::zeros(1, 1); weights.len()];
        for l in (0..weights.len()).rev() {
            grads[l] = matmul_tn(&acts[l], &delta)?;
            if l > 0 {
                let back = matmul_nt(&delta, &weights[l])?;
                delta = back.zip_map_unchecked(&acts[l], |d, h| d * (1.0 - h * h));
            }
        }
        Ok((loss, grads))
    }

    fn check_shapes(&self, weights: &[Matrix]) -> Result<()> {
        let shapes = self.spec.weight_shapes();
        if weights.len() != shapes.len() {
            return Err(Error::ShapeMismatch {
                op: "mlp_eval",
                left: (shapes.len(), 1),
                right: (weights.len(), 1),
            });
        }
        for (w, &s) in weights.iter().zip(&shapes) {
            if w.shape() != s {
                return Err(Error::ShapeMismatch {
                    op: "mlp_eval",
                    left: s,
                    right: w.shape(),
                });
            }
        }
        Ok(())
    }
}

fn input_scales(d: usize, condition: f64) -> Vec<f64> {
    if d == 1 {
        return vec![1.0];
    }
    let span = -0.5 * condition.log10();
    (0..d)
        .map(|i| 10f64.powf(span * i as f64 / (d - 1) as f64))
        .collect()
}

fn random_weights(rng: &mut SeededRng, shapes: &[(usize, usize)]) -> Vec<Matrix> {
    shapes
        .iter()
        .map(|&(a, b)| rng.normal_matrix(a, b, 1.0 / (a as f64).sqrt()))
        .collect()
}

/// Activations of every layer, input first.
fn forward(weights: &[Matrix], x: &Matrix) -> Result<Vec<Matrix>> {
    let mut acts = Vec::with_capacity(weights.len() + 1);
    acts.push(x.clone());
    for (l, w) in weights.iter().enumerate() {
        let z = matmul(&acts[l], w)?;
        acts.push(if l + 1 < weights.len() { z.map(f64::tanh) } else { z });
    }
    Ok(acts)
}

fn gather(m: &Matrix, idx: &[usize]) -> Result<Matrix> {
    let mut data = Vec::with_capacity(idx.len() * m.cols());
    for &i in idx {
        if i >= m.rows() {
            return Err(Error::InvalidData(format!("batch index {i} out of range")));
        }
        data.extend_from_slice(m.row(i));
    }
    Matrix::new(idx.len(), m.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem() -> MlpProblem {
        MlpProblem::new(MlpSpec::new(vec![3, 5, 2], 11, 17)).unwrap()
    }

    #[test]
    fn null_network() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0]]).unwrap();
        let y = Matrix::zeros(2, 1);
        let p = MlpProblem::from_data(vec![2, 3, 1], x, y).unwrap();
        let w = vec![Matrix::zeros(2, 3), Matrix::zeros(3, 1)];
        let (loss, g) = p.eval(&w, None).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|m| m.max_abs() == 0.0));
    }

    #[test]
    fn linear_layer_is_least_squares() {
        let x = Matrix::from_rows(&[[1.0, 0.5], [-2.0, 1.0], [0.3, 0.3]]).unwrap();
        let y = Matrix::from_rows(&[[1.0], [0.0], [2.0]]).unwrap();
        let p = MlpProblem::from_data(vec![2, 1], x.clone(), y.clone()).unwrap();
        let w = Matrix::from_rows(&[[0.2], [-0.7]]).unwrap();
        let (_, g) = p.eval(std::slice::from_ref(&w), None).unwrap();
        let r = x.matmul(&w).unwrap().sub(&y).unwrap();
        let expected = x.transpose().matmul(&r).unwrap().scale(2.0 / 3.0);
        for (a, b) in g[0].as_slice().iter().zip(expected.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let p = problem();
        let w = p.init_weights(5);
        let (_, g) = p.eval(&w, None).unwrap();
        let h = 1e-6;
        for (l, gl) in g.iter().enumerate() {
            for i in 0..gl.rows() {
                for j in 0..gl.cols() {
                    let mut wp = w.clone();
                    let mut wm = w.clone();
                    wp[l][(i, j)] += h;
                    wm[l][(i, j)] -= h;
                    let fd = (p.eval(&wp, None).unwrap().0 - p.eval(&wm, None).unwrap().0) / (2.0 * h);
                    assert!((fd - gl[(i, j)]).abs() <= 1e-4 * gl[(i, j)].abs().max(1e-3));
                }
            }
        }
    }

    #[test]
    fn batch_subset_and_shape_errors() {
        let p = problem();
        let w = p.init_weights(1);
        let all: Vec<usize> = (0..p.n_samples()).collect();
        assert_eq!(p.eval(&w, None).unwrap(), p.eval(&w, Some(&all)).unwrap());
        assert!(p.eval(&w[..1], None).is_err());
        assert!(p.eval(&w, Some(&[99])).is_err());
    }

    #[test]
    fn dataset_is_a_function_of_the_seed() {
        assert_eq!(problem(), problem());
        let other = MlpProblem::new(MlpSpec::new(vec![3, 5, 2], 12, 17)).unwrap();
        assert_ne!(problem().inputs(), other.inputs());
    }

    #[test]
    fn conditioned_inputs_have_requested_spread() {
        let s = input_scales(8, 100.0);
        assert!((s[0] - 1.0).abs() < 1e-15);
        assert!((s[7] - 0.1).abs() < 1e-15);
    }
}
