use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::eigenbasis::BasisState;
use crate::error::{Error, Result};
use crate::landscape::Landscape;
use crate::linalg::{kronecker, matmul, matmul_tn, one_one_norm, Matrix};
use crate::optim::{delay_compensated_gradient, Optimizer, OptimizerKind};
use crate::rng::{SeededRng, Stream};
use crate::staleness::{delayed_gradient, StashBuffer};

/// Loss above which a run counts as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub effective_delay: u64,
    pub misalignment_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub iterations_to_threshold: Option<u64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub diverged: bool,
    /// The spiral run reached the origin, where its gradient is undefined.
    pub converged_at_origin: bool,
    pub wall_steps: u64,
    pub basis_warnings: u64,
    pub misalignment_norm_trace: Option<Vec<f64>>,
    pub config_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub trace: Vec<TraceRow>,
    pub summary: RunSummary,
    pub final_params: Vec<Matrix>,
}

/// Runs the step loop: loss check, delayed gradient, optimizer step, stash
/// advance, log. Stops at `max_steps`, at the first iterate whose loss is at or
/// below the threshold, or on divergence.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let (landscape, mut params) = cfg.landscape.build(cfg.seed)?;
    let mut optimizer = Optimizer::new(cfg.optimizer.clone(), cfg.estimation, &landscape.param_shapes())?;
    let mut stash = StashBuffer::new(cfg.staleness.max_delay(), params.clone());
    let mut batches = SeededRng::stream(cfg.seed, Stream::Batches);
    let batch_size = cfg.landscape.batch_size();
    let has_hessian = landscape.hessian().is_some();

    let mut trace = Vec::new();
    let mut misalignment = has_hessian.then(Vec::new);
    let mut diverged = false;
    let mut at_origin = false;
    let mut reached = None;

    let initial_loss = current_loss(&landscape, &params, &mut at_origin)?;
    let mut loss = initial_loss;
    let mut steps = 0u64;
    loop {
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            diverged = true;
            break;
        }
        if at_origin {
            reached = cfg.loss_threshold.map(|_| steps);
            break;
        }
        if cfg.loss_threshold.is_some_and(|thr| loss <= thr) {
            reached = Some(steps);
            break;
        }
        if steps == cfg.max_steps {
            break;
        }
        let batch = batch_size.map(|b| batches.sample_indices(landscape.n_samples().unwrap_or(0), b));
        let served = match delayed_gradient(&landscape, &stash, batch.as_deref(), &cfg.staleness, Some(&optimizer)) {
            Ok(s) => s,
            Err(Error::DegeneratePolar { .. }) => {
                at_origin = true;
                continue;
            }
            Err(e) => return Err(e),
        };
        let grads = if cfg.optimizer.name == OptimizerKind::DelayCompensation {
            served
                .grads
                .iter()
                .zip(&params)
                .zip(&served.evaluated_at)
                .map(|((g, now), stale)| delay_compensated_gradient(g, now, stale, cfg.optimizer.dc_lambda))
                .collect::<Result<Vec<_>>>()?
        } else {
            served.grads
        };
        let grad_norm = match optimizer.step(&mut params, &grads, &served.delays) {
            Ok(n) => n,
            Err(Error::NonFiniteGradient { .. }) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        steps += 1;
        stash.advance(params.clone());
        loss = current_loss(&landscape, &params, &mut at_origin)?;
        if steps.is_multiple_of(cfg.log_every) {
            let mis = if has_hessian { Some(optimizer_misalignment(&landscape, &optimizer)?) } else { None };
            if let (Some(trace), Some(m)) = (misalignment.as_mut(), mis) {
                trace.push(m);
            }
            trace.push(TraceRow {
                step: steps,
                loss,
                grad_norm,
                effective_delay: served.delays.iter().copied().max().unwrap_or(0),
                misalignment_norm: mis,
            });
        }
    }

    let basis_warnings = optimizer
        .state()
        .slots
        .iter()
        .filter_map(|s| s.basis.as_ref())
        .map(BasisState::warnings)
        .sum();
    Ok(RunRecord {
        trace,
        summary: RunSummary {
            iterations_to_threshold: reached,
            initial_loss,
            final_loss: loss,
            diverged,
            converged_at_origin: at_origin,
            wall_steps: steps,
            basis_warnings,
            misalignment_norm_trace: misalignment,
            config_fingerprint: cfg.fingerprint(),
        },
        final_params: params,
    })
}

fn current_loss(landscape: &Landscape, params: &[Matrix], at_origin: &mut bool) -> Result<f64> {
    if let Landscape::Spiral(_) = landscape {
        let r = params[0][(0, 0)].hypot(params[0][(1, 0)]);
        if !(r > crate::landscape::SPIRAL_ORIGIN_CUTOFF) {
            *at_origin = true;
        }
    }
    landscape.loss(params)
}

fn optimizer_misalignment(landscape: &Landscape, optimizer: &Optimizer) -> Result<f64> {
    let h = landscape.hessian().ok_or(Error::UnsupportedMetric)?;
    match optimizer.state().slots.first().and_then(|s| s.basis.as_ref()) {
        Some(b) => rotated_hessian_norm(h, b.u(), b.v()),
        None => Ok(one_one_norm(h)),
    }
}

/// `‖(V ⊗ U)ᵀ H (V ⊗ U)‖₁₁`, the Hessian's (1,1)-norm in the rotated coordinates
/// `UᵀWV` of a column-major flattened parameter.
pub fn rotated_hessian_norm(h: &Matrix, u: &Matrix, v: &Matrix) -> Result<f64> {
    let q = kronecker(v, u);
    if q.rows() != h.rows() || !h.is_square() {
        return Err(Error::ShapeMismatch {
            op: "misalignment",
            left: h.shape(),
            right: q.shape(),
        });
    }
    Ok(one_one_norm(&matmul(&matmul_tn(&q, h)?, &q)?))
}

/// (1,1)-norm of the landscape's Hessian in the basis of `basis`.
pub fn misalignment_trace(landscape: &Landscape, basis: &BasisState) -> Result<f64> {
    let h = landscape.hessian().ok_or(Error::UnsupportedMetric)?;
    rotated_hessian_norm(h, basis.u(), basis.v())
}

/// `T_delay / T_no_delay`.
pub fn slowdown_ratio(with_delay: &RunRecord, without: &RunRecord) -> Result<f64> {
    let t_delay = with_delay
        .summary
        .iterations_to_threshold
        .ok_or(Error::ThresholdNotReached { which: "with_delay" })?;
    let t_plain = without
        .summary
        .iterations_to_threshold
        .ok_or(Error::ThresholdNotReached { which: "without_delay" })?;
    if t_delay == t_plain {
        return Ok(1.0);
    }
    Ok(t_delay as f64 / t_plain as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigenbasis::{init_basis, EstimationConfig, Geometry, Source};
    use crate::harness::config::LandscapeConfig;
    use crate::landscape::QuadraticSpec;
    use crate::linalg::{jacobi_eigen, rotation_2d};
    use crate::optim::{AdamHyper, OptimizerConfig};
    use crate::staleness::StalenessConfig;

    fn quad(angle: f64, tau: u64) -> RunConfig {
        RunConfig {
            seed: 0,
            max_steps: 500,
            loss_threshold: Some(15.0),
            log_every: 1,
            landscape: LandscapeConfig::Quadratic {
                eigenvalues: vec![10.0, 1.0],
                angle_deg: Some(angle),
                rotation_seed: None,
                start: None,
            },
            optimizer: OptimizerConfig::new(OptimizerKind::Adam, AdamHyper::plain(1.0, 0.0, 0.1)),
            estimation: None,
            staleness: StalenessConfig::uniform(tau),
        }
    }

    #[test]
    fn reaches_threshold() {
        let r = run_experiment(&quad(0.0, 0)).unwrap();
        assert!(r.summary.iterations_to_threshold.is_some());
        assert!(r.summary.final_loss <= 15.0);
    }

    #[test]
    fn zero_steps() {
        let cfg = RunConfig { max_steps: 0, ..quad(45.0, 0) };
        let r = run_experiment(&cfg).unwrap();
        assert!(r.trace.is_empty());
        assert_eq!(r.summary.final_loss, r.summary.initial_loss);
    }

    #[test]
    fn deterministic() {
        let a = run_experiment(&quad(45.0, 2)).unwrap();
        let b = run_experiment(&quad(45.0, 2)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn divergence_is_flagged() {
        let mut cfg = quad(45.0, 8);
        cfg.loss_threshold = None;
        cfg.optimizer.hyper.eta = 1e7;
        let r = run_experiment(&cfg).unwrap();
        assert!(r.summary.diverged);
    }

    #[test]
    fn slowdown_ratio_contract() {
        let r = run_experiment(&quad(0.0, 0)).unwrap();
        assert_eq!(slowdown_ratio(&r, &r).unwrap(), 1.0);
        let mut slow = r.clone();
        let mut fast = r.clone();
        slow.summary.iterations_to_threshold = Some(200);
        fast.summary.iterations_to_threshold = Some(100);
        assert_eq!(slowdown_ratio(&slow, &fast).unwrap(), 2.0);
        fast.summary.iterations_to_threshold = None;
        assert_eq!(
            slowdown_ratio(&slow, &fast).unwrap_err(),
            Error::ThresholdNotReached { which: "without_delay" }
        );
    }

    #[test]
    fn misalignment_examples() {
        let est = EstimationConfig::new(Source::Second, Geometry::Bilateral);
        let aligned = Landscape::Quadratic(QuadraticSpec::planar([10.0, 1.0], 0.0).unwrap());
        let b = init_basis(2, 1, &est);
        assert_eq!(misalignment_trace(&aligned, &b).unwrap(), 11.0);

        let q = QuadraticSpec::planar([10.0, 1.0], 45.0).unwrap();
        let mut b = init_basis(2, 1, &est);
        b.set_bases(jacobi_eigen(q.hessian()).unwrap().vectors, Matrix::identity(1)).unwrap();
        let land = Landscape::Quadratic(q);
        assert!((misalignment_trace(&land, &b).unwrap() - 11.0).abs() < 1e-12);
        assert!(rotated_hessian_norm(land.hessian().unwrap(), &rotation_2d(0.0), &Matrix::identity(1)).unwrap() > 11.0);

        let spiral = Landscape::Spiral(Default::default());
        assert_eq!(misalignment_trace(&spiral, &b), Err(Error::UnsupportedMetric));
    }
}
