//! Independent checks of the numerical kernels and the optimizer invariants.

use crate::eigenbasis::{refresh_basis, EstimationConfig, Geometry, Source};
use crate::error::{Error, Result};
use crate::harness::{random_spd, rotated_hessian_norm, run_experiment, summary_json, trace_csv, LandscapeConfig, RunConfig};
use crate::landscape::{build_kronecker_quadratic, MlpProblem, MlpSpec, QuadraticSpec, SpiralSpec};
use crate::linalg::{
    jacobi_eigen, kronecker, matmul, max_column_angle, one_one_norm, orthonormality_error, power_qr_step, qr_decompose,
    rotation_2d, Matrix,
};
use crate::optim::{AdamHyper, Optimizer, OptimizerConfig, OptimizerKind};
use crate::pipemodel::{emit_stage_table, StageTableConfig, STAGE_TABLE_FIXTURE, STAGE_TABLE_GOLDEN};
use crate::rng::{SeededRng, Stream};
use crate::staleness::{delayed_gradient, StalenessConfig, StashBuffer};

fn oracle_rng(tag: u64) -> SeededRng {
    SeededRng::new(tag, Stream::Oracle as u64)
}

fn rel(err: f64, scale: f64) -> f64 {
    err / scale.max(f64::MIN_POSITIVE)
}

/// Textbook triple loop.
pub fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a[(i, k)] * b[(k, j)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

/// Worst relative deviation of `matmul` from [`naive_matmul`].
pub fn matmul_error(cases: usize) -> Result<f64> {
    let mut rng = oracle_rng(11);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (m, k, n) = (1 + rng.below(12) as usize, 1 + rng.below(12) as usize, 1 + rng.below(12) as usize);
        let a = rng.normal_matrix(m, k, 1.0);
        let b = rng.normal_matrix(k, n, 1.0);
        let fast = matmul(&a, &b)?;
        let slow = naive_matmul(&a, &b);
        worst = worst.max(rel(fast.sub(&slow)?.frobenius_norm(), slow.frobenius_norm()));
    }
    Ok(worst)
}

/// Worst `‖QR − A‖_F` and `‖QᵀQ − I‖_F` over random tall matrices.
pub fn qr_error(cases: usize) -> Result<(f64, f64)> {
    let mut rng = oracle_rng(12);
    let (mut recon, mut ortho): (f64, f64) = (0.0, 0.0);
    for _ in 0..cases {
        let n = 1 + rng.below(16) as usize;
        let m = n + rng.below(8) as usize;
        let a = rng.normal_matrix(m, n, 1.0);
        let qr = qr_decompose(&a)?;
        recon = recon.max(matmul(&qr.q, &qr.r)?.sub(&a)?.frobenius_norm());
        ortho = ortho.max(orthonormality_error(&qr.q));
    }
    Ok((recon, ortho))
}

/// Worst Jacobi reconstruction and orthonormality errors, sizes 1 to 32.
pub fn jacobi_error() -> Result<(f64, f64)> {
    let mut rng = oracle_rng(13);
    let (mut recon, mut ortho): (f64, f64) = (0.0, 0.0);
    for n in 1..=32 {
        let a = rng.normal_matrix(n, n, 1.0).symmetrized();
        let e = jacobi_eigen(&a)?;
        recon = recon.max(e.reconstruct().sub(&a)?.frobenius_norm());
        ortho = ortho.max(orthonormality_error(&e.vectors));
    }
    Ok((recon, ortho))
}

/// Angle to the exact eigenbasis after `iters` subspace-iteration steps on a
/// 6x6 matrix whose consecutive eigenvalues halve, and after `iters_r45`
/// steps on `R(45°) diag(10, 1) R(45°)ᵀ`.
pub fn power_iteration_error(iters: usize, iters_r45: usize) -> Result<(f64, f64)> {
    let mut rng = oracle_rng(14);
    let q = rng.orthogonal(6);
    let lam: Vec<f64> = (0..6).map(|i| 0.5f64.powi(i)).collect();
    let a = matmul(&matmul(&q, &Matrix::from_diag(&lam)?)?, &q.transpose())?.symmetrized();
    let mut basis = Matrix::identity(6);
    for _ in 0..iters {
        basis = power_qr_step(&a, &basis)?;
    }
    let general = max_column_angle(&basis, &q);

    let r = rotation_2d(45.0);
    let a2 = matmul(&matmul(&r, &Matrix::from_diag(&[10.0, 1.0])?)?, &r.transpose())?;
    let mut b2 = Matrix::identity(2);
    for _ in 0..iters_r45 {
        b2 = power_qr_step(&a2, &b2)?;
    }
    Ok((general, max_column_angle(&b2, &r)))
}

/// Mixed-product identity, transpose identity, and (1,1)-norm
/// multiplicativity of the Kronecker product; worst absolute error.
pub fn kronecker_identities(cases: usize) -> Result<f64> {
    let mut rng = oracle_rng(15);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let a = rng.normal_matrix(2, 2, 1.0);
        let b = rng.normal_matrix(2, 2, 1.0);
        let a2 = rng.normal_matrix(2, 2, 1.0);
        let b2 = rng.normal_matrix(2, 2, 1.0);
        let lhs = matmul(&kronecker(&a, &b), &kronecker(&a2, &b2))?;
        let rhs = kronecker(&matmul(&a, &a2)?, &matmul(&b, &b2)?);
        worst = worst.max(lhs.sub(&rhs)?.max_abs());
        let t = kronecker(&a, &b).transpose().sub(&kronecker(&a.transpose(), &b.transpose()))?;
        worst = worst.max(t.max_abs());
        let norm = one_one_norm(&kronecker(&a, &b)) - one_one_norm(&a) * one_one_norm(&b);
        worst = worst.max(norm.abs());
    }
    Ok(worst)
}

/// Worst relative error between the spectrum of `A ⊗ B` and the sorted
/// products of the factor spectra.
pub fn kronecker_spectrum_error(cases: usize) -> Result<f64> {
    let mut rng = oracle_rng(16);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let n = 2 + rng.below(3) as usize;
        let m = 2 + rng.below(3) as usize;
        let a = random_spd(&mut rng, n);
        let b = random_spd(&mut rng, m);
        let q = build_kronecker_quadratic(&a, &b)?;
        let direct = jacobi_eigen(q.hessian())?;
        for (x, y) in direct.values.iter().zip(q.eigenvalues()) {
            worst = worst.max(rel((x - y).abs(), y.abs()));
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingReport {
    pub cases: usize,
    /// Largest relative excess of a norm over the one it should not exceed.
    pub max_violation: f64,
    /// Largest relative gap between the fully rotated norm and its closed form.
    pub max_closed_form_error: f64,
}

fn ordering_violation(full: f64, one_sided: f64, none: f64) -> f64 {
    let a = (full - one_sided) / one_sided.max(f64::MIN_POSITIVE);
    let b = (one_sided - none) / none.max(f64::MIN_POSITIVE);
    a.max(b).max(0.0)
}

/// Norm ordering for Kronecker Hessians with exact factor eigenbases, and the
/// closed-form value `Σᵢⱼ λᵢ(A) λⱼ(B)` of the fully rotated norm.
pub fn kronecker_ordering(cases: usize) -> Result<OrderingReport> {
    let mut rng = oracle_rng(17);
    let (mut viol, mut closed): (f64, f64) = (0.0, 0.0);
    for _ in 0..cases {
        let n = 2 + rng.below(5) as usize;
        let m = 2 + rng.below(5) as usize;
        let a = random_spd(&mut rng, n);
        let b = random_spd(&mut rng, m);
        let ea = jacobi_eigen(&a)?;
        let eb = jacobi_eigen(&b)?;
        let h = kronecker(&a, &b);
        let full = rotated_hessian_norm(&h, &eb.vectors, &ea.vectors)?;
        let one_sided = rotated_hessian_norm(&h, &eb.vectors, &Matrix::identity(n))?;
        let none = one_one_norm(&h);
        viol = viol.max(ordering_violation(full, one_sided, none));
        let expect: f64 = ea.values.iter().flat_map(|la| eb.values.iter().map(move |lb| la * lb)).sum();
        closed = closed.max(rel((full - expect).abs(), expect));
    }
    Ok(OrderingReport {
        cases,
        max_violation: viol,
        max_closed_form_error: closed,
    })
}

/// The same ordering for rank-one `H = vec(Ḡ) vec(Ḡ)ᵀ` with `Ḡ = σ u vᵀ` and
/// bases from the exact singular vectors; the closed form is `σ²`.
pub fn rank_one_ordering(cases: usize) -> Result<OrderingReport> {
    let mut rng = oracle_rng(18);
    let (mut viol, mut closed): (f64, f64) = (0.0, 0.0);
    for _ in 0..cases {
        let n = 2 + rng.below(5) as usize;
        let m = 2 + rng.below(5) as usize;
        let u = rng.normal_matrix(m, 1, 1.0);
        let v = rng.normal_matrix(n, 1, 1.0);
        let sigma = rng.uniform_range(0.5, 3.0);
        let u = u.scale(1.0 / u.frobenius_norm());
        let v = v.scale(1.0 / v.frobenius_norm());
        let g = matmul(&u, &v.transpose())?.scale(sigma);
        let vg = Matrix::column(&g.col_major_vec())?;
        let h = matmul(&vg, &vg.transpose())?;
        let left = jacobi_eigen(&matmul(&g, &g.transpose())?)?;
        let right = jacobi_eigen(&matmul(&g.transpose(), &g)?)?;
        let full = rotated_hessian_norm(&h, &left.vectors, &right.vectors)?;
        let one_sided = rotated_hessian_norm(&h, &left.vectors, &Matrix::identity(n))?;
        let none = one_one_norm(&h);
        viol = viol.max(ordering_violation(full, one_sided, none));
        closed = closed.max(rel((full - sigma * sigma).abs(), sigma * sigma));
    }
    Ok(OrderingReport {
        cases,
        max_violation: viol,
        max_closed_form_error: closed,
    })
}

/// Worst relative excess of the exact-eigenbasis norm over the norm under
/// random orthogonal bases (negative excess means the minimum held).
pub fn rotation_minimum_excess(cases: usize) -> Result<f64> {
    let mut rng = oracle_rng(19);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..cases {
        let a = random_spd(&mut rng, 3);
        let b = random_spd(&mut rng, 2);
        let h = kronecker(&a, &b);
        let best = rotated_hessian_norm(&h, &jacobi_eigen(&b)?.vectors, &jacobi_eigen(&a)?.vectors)?;
        for _ in 0..10 {
            let other = rotated_hessian_norm(&h, &rng.orthogonal(2), &rng.orthogonal(3))?;
            worst = worst.max((best - other) / other);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivarianceReport {
    pub steps: usize,
    /// Largest entrywise gap between the rotated run and the mapped-back
    /// pre-rotated run, over all steps.
    pub max_deviation: f64,
    /// Identity-basis rotated Adam matched plain Adam bit for bit.
    pub identity_bit_identical: bool,
}

fn kronecker_fixture() -> Result<(QuadraticSpec, Matrix, Matrix, Matrix)> {
    let mut rng = oracle_rng(20);
    let a = random_spd(&mut rng, 4);
    let b = random_spd(&mut rng, 3);
    let q = build_kronecker_quadratic(&a, &b)?;
    let w0 = rng.normal_matrix(3, 4, 1.0);
    let u = jacobi_eigen(&b)?.vectors;
    let v = jacobi_eigen(&a)?.vectors;
    Ok((q, w0, u, v))
}

fn fixed_basis_optimizer(u: Option<(Matrix, Matrix)>, hyper: AdamHyper, shape: (usize, usize)) -> Result<Optimizer> {
    let est = EstimationConfig {
        update_frequency: u64::MAX,
        ..EstimationConfig::new(Source::Second, Geometry::Bilateral)
    };
    let mut opt = Optimizer::new(OptimizerConfig::new(OptimizerKind::RotatedAdam, hyper), Some(est), &[shape])?;
    if let Some((u, v)) = u {
        let basis = opt.state_mut().slots[0].basis.as_mut().ok_or(Error::UnsupportedMetric)?;
        basis.set_bases(u, v)?;
    }
    Ok(opt)
}

/// Rotated Adam with the exact, fixed eigenbasis of a Kronecker quadratic
/// against plain Adam on the pre-rotated problem; and identity-basis rotated
/// Adam against plain Adam on the original problem.
pub fn equivariance(steps: usize) -> Result<EquivarianceReport> {
    let (q, w0, u, v) = kronecker_fixture()?;
    let (a, b) = q.factors().ok_or(Error::UnsupportedMetric)?;
    let a_rot = matmul(&matmul(&v.transpose(), a)?, &v)?.symmetrized();
    let b_rot = matmul(&matmul(&u.transpose(), b)?, &u)?.symmetrized();
    let q_rot = build_kronecker_quadratic(&a_rot, &b_rot)?;
    let hyper = AdamHyper::plain(0.01, 0.9, 0.999);
    let shape = w0.shape();

    let mut rotated = fixed_basis_optimizer(Some((u.clone(), v.clone())), hyper, shape)?;
    let mut plain = Optimizer::new(OptimizerConfig::new(OptimizerKind::Adam, hyper), None, &[shape])?;
    let mut w = vec![w0.clone()];
    let mut wt = vec![matmul(&matmul(&u.transpose(), &w0)?, &v)?];
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        let (_, g) = q.eval_matrix(&w[0])?;
        rotated.step(&mut w, &[g], &[0])?;
        let (_, gt) = q_rot.eval_matrix(&wt[0])?;
        plain.step(&mut wt, &[gt], &[0])?;
        let back = matmul(&matmul(&u, &wt[0])?, &v.transpose())?;
        worst = worst.max(back.sub(&w[0])?.max_abs());
    }

    let mut ident = fixed_basis_optimizer(None, hyper, shape)?;
    let mut plain = Optimizer::new(OptimizerConfig::new(OptimizerKind::Adam, hyper), None, &[shape])?;
    let mut wa = vec![w0.clone()];
    let mut wb = vec![w0];
    let mut identical = true;
    for _ in 0..steps {
        let (_, ga) = q.eval_matrix(&wa[0])?;
        let (_, gb) = q.eval_matrix(&wb[0])?;
        ident.step(&mut wa, &[ga], &[0])?;
        plain.step(&mut wb, &[gb], &[0])?;
        identical &= wa[0].as_slice().iter().zip(wb[0].as_slice()).all(|(x, y)| x.to_bits() == y.to_bits());
    }
    Ok(EquivarianceReport {
        steps,
        max_deviation: worst,
        identity_bit_identical: identical,
    })
}

/// Central-difference gradient of `loss` at `x` along each coordinate in `coords`.
fn central_difference(x: &[f64], coords: &[usize], h: f64, mut loss: impl FnMut(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
    let mut y = x.to_vec();
    coords
        .iter()
        .map(|&i| {
            y[i] = x[i] + h;
            let up = loss(&y)?;
            y[i] = x[i] - h;
            let down = loss(&y)?;
            y[i] = x[i];
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientErrors {
    pub quadratic: f64,
    pub quadratic_hessian: f64,
    pub spiral: f64,
    pub mlp: f64,
}

/// Worst relative gradient errors against central differences.
pub fn finite_difference_errors() -> Result<GradientErrors> {
    let mut rng = oracle_rng(21);

    let mut quadratic: f64 = 0.0;
    let mut quadratic_hessian: f64 = 0.0;
    for _ in 0..10 {
        let dim = 2 + rng.below(5) as usize;
        let q = QuadraticSpec::new(
            {
                let mut l: Vec<f64> = (0..dim).map(|_| rng.uniform_range(0.1, 10.0)).collect();
                l.sort_by(|a, b| b.total_cmp(a));
                l
            },
            rng.orthogonal(dim),
        )?;
        let x: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let (_, g) = q.eval(&x)?;
        let all: Vec<usize> = (0..dim).collect();
        let fd = central_difference(&x, &all, 1e-5, |y| Ok(q.eval(y)?.0))?;
        quadratic = quadratic.max(rel(diff_norm(&fd, &g), norm(&g)));
        let mut hfd = Matrix::zeros(dim, dim);
        for j in 0..dim {
            let mut y = x.clone();
            y[j] += 1e-5;
            let up = q.eval(&y)?.1;
            y[j] = x[j] - 1e-5;
            let down = q.eval(&y)?.1;
            for i in 0..dim {
                hfd[(i, j)] = (up[i] - down[i]) / 2e-5;
            }
        }
        quadratic_hessian =
            quadratic_hessian.max(rel(hfd.sub(q.hessian())?.frobenius_norm(), q.hessian().frobenius_norm()));
    }

    let spec = SpiralSpec::default();
    let mut spiral: f64 = 0.0;
    for _ in 0..100 {
        let r = rng.uniform_range(0.5, 35.0);
        let th = rng.uniform_range(-std::f64::consts::PI, std::f64::consts::PI);
        let xy = crate::landscape::from_polar(r, th);
        let (_, g) = spec.eval(xy)?;
        let fd = central_difference(&xy, &[0, 1], 1e-6, |y| Ok(spec.eval([y[0], y[1]])?.0))?;
        spiral = spiral.max(diff_norm(&fd, &g) / norm(&g).max(1.0));
    }

    let problem = MlpProblem::new(MlpSpec::new(vec![5, 7, 3], 3, 32))?;
    let weights = problem.init_weights(4);
    let (_, grads) = problem.eval(&weights, None)?;
    let mut mlp: f64 = 0.0;
    for (k, (w, g)) in weights.iter().zip(&grads).enumerate() {
        let coords = rng.sample_indices(w.as_slice().len(), 20);
        let fd = central_difference(w.as_slice(), &coords, 1e-6, |y| {
            let mut ws = weights.clone();
            ws[k] = Matrix::from_raw(w.rows(), w.cols(), y.to_vec());
            Ok(problem.eval(&ws, None)?.0)
        })?;
        let analytic: Vec<f64> = coords.iter().map(|&i| g.as_slice()[i]).collect();
        mlp = mlp.max(rel(diff_norm(&fd, &analytic), norm(&analytic)));
    }
    Ok(GradientErrors {
        quadratic,
        quadratic_hessian,
        spiral,
        mlp,
    })
}

/// Replays a delayed run offline: every served gradient must equal the
/// gradient recomputed at the parameters from `delay` steps earlier.
/// Returns the worst absolute deviation over a quadratic and a mini-batch MLP.
pub fn stash_replay_error(steps: usize) -> Result<f64> {
    let cases = [
        (
            LandscapeConfig::Quadratic {
                eigenvalues: vec![10.0, 1.0],
                angle_deg: Some(30.0),
                rotation_seed: None,
                start: None,
            },
            StalenessConfig::uniform(3),
        ),
        (
            LandscapeConfig::Mlp {
                layer_dims: vec![4, 6, 2],
                dataset_seed: 1,
                n_samples: 32,
                input_condition: 1.0,
                batch_size: Some(8),
            },
            StalenessConfig {
                per_stage: Some(vec![2, 0]),
                ..StalenessConfig::uniform(2)
            },
        ),
    ];
    let mut worst: f64 = 0.0;
    for (landscape_cfg, staleness) in cases {
        let (landscape, mut params) = landscape_cfg.build(5)?;
        let mut opt = Optimizer::new(
            OptimizerConfig::new(OptimizerKind::Adam, AdamHyper::plain(0.01, 0.9, 0.999)),
            None,
            &landscape.param_shapes(),
        )?;
        let mut stash = StashBuffer::new(staleness.max_delay(), params.clone());
        let mut history = vec![params.clone()];
        let mut rng = SeededRng::stream(5, Stream::Batches);
        for t in 0..steps {
            let batch = landscape_cfg
                .batch_size()
                .zip(landscape.n_samples())
                .map(|(b, n)| rng.sample_indices(n, b));
            let served = delayed_gradient(&landscape, &stash, batch.as_deref(), &staleness, None)?;
            for (i, &d) in served.delays.iter().enumerate() {
                let past = &history[t - d as usize];
                let (_, g) = landscape.loss_and_grad(past, batch.as_deref())?;
                worst = worst.max(g[i].sub(&served.grads[i])?.max_abs());
                worst = worst.max(past[i].sub(&served.evaluated_at[i])?.max_abs());
            }
            opt.step(&mut params, &served.grads, &served.delays)?;
            stash.advance(params.clone());
            history.push(params.clone());
        }
    }
    Ok(worst)
}

fn determinism_configs() -> Vec<RunConfig> {
    let mut quad = super::phenomena::quadratic_config(45.0, 2, true);
    quad.max_steps = 200;
    let mut mlp = super::phenomena::mlp_config(3, Some((Source::First, Geometry::Bilateral)));
    mlp.max_steps = 200;
    mlp.log_every = 10;
    if let LandscapeConfig::Mlp { batch_size, .. } = &mut mlp.landscape {
        *batch_size = Some(64);
    }
    vec![quad, mlp]
}

/// Runs each config twice and compares the serialized artifacts byte for byte.
pub fn determinism() -> Result<bool> {
    let mut same = true;
    for cfg in determinism_configs() {
        let a = run_experiment(&cfg)?;
        let b = run_experiment(&cfg)?;
        same &= trace_csv(&a) == trace_csv(&b) && summary_json(&a.summary) == summary_json(&b.summary);
    }
    Ok(same)
}

/// Angle between a First-source basis refreshed repeatedly on a fixed
/// momentum and the exact singular vectors of that momentum.
pub fn eigenbasis_convergence(refreshes: usize) -> Result<f64> {
    let mut rng = oracle_rng(22);
    let q_left = rng.orthogonal(3);
    let q_right = rng.orthogonal(3);
    let m = matmul(&matmul(&q_left, &Matrix::from_diag(&[3.0, 1.5, 0.75])?)?, &q_right.transpose())?;
    let cfg = EstimationConfig::new(Source::First, Geometry::Bilateral);
    let mut state = crate::eigenbasis::init_basis(3, 3, &cfg);
    for _ in 0..refreshes {
        refresh_basis(&mut state, &m, &cfg)?;
    }
    Ok(max_column_angle(state.u(), &q_left).max(max_column_angle(state.v(), &q_right)))
}

/// Cells where the stage table computed from the bundled inputs differs from
/// the golden file.
pub fn stage_table_golden_mismatches() -> Result<usize> {
    let cfg = StageTableConfig::from_toml(STAGE_TABLE_FIXTURE)?;
    let table = emit_stage_table(&cfg.models, &cfg.devices);
    Ok(crate::pipemodel::diff_stage_tables(&table, STAGE_TABLE_GOLDEN).len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naive_matmul_hand_case() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[[5.0], [6.0]]).unwrap();
        assert_eq!(naive_matmul(&a, &b).as_slice(), &[17.0, 39.0]);
    }

    #[test]
    fn ordering_violation_is_zero_when_ordered() {
        assert_eq!(ordering_violation(1.0, 2.0, 3.0), 0.0);
        assert!((ordering_violation(2.2, 2.0, 3.0) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn central_difference_of_a_cubic() {
        let d = central_difference(&[2.0], &[0], 1e-4, |x| Ok(x[0].powi(3))).unwrap();
        assert!((d[0] - 12.0).abs() < 1e-6);
    }

    #[test]
    fn small_equivariance_run() {
        let e = equivariance(50).unwrap();
        assert!(e.max_deviation < 1e-12);
        assert!(e.identity_bit_identical);
    }
}
