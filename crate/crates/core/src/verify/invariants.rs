//! Module-level invariants checked on fixed randomized instances.

use crate::eigenbasis::{accumulate_statistics, init_basis, refresh_basis, EstimationConfig, Geometry, Source};
use crate::error::Result;
use crate::harness::{random_spd, run_experiment, slowdown_ratio, LandscapeConfig, RunConfig};
use crate::landscape::SpiralSpec;
use crate::linalg::{jacobi_eigen, matmul, one_one_norm, orthonormality_error, Matrix};
use crate::optim::{AdamHyper, Optimizer, OptimizerConfig, OptimizerKind};
use crate::pipemodel::{required_stages, StageTableConfig, STAGE_TABLE_FIXTURE};
use crate::rng::{SeededRng, Stream};
use crate::staleness::{StalenessConfig, StalenessMode, StashBuffer};

use super::phenomena::{quadratic_config, QUADRATIC_TAUS};

fn oracle_rng(tag: u64) -> SeededRng {
    SeededRng::new(tag, Stream::Oracle as u64)
}

pub const ALL_OPTIMIZERS: [OptimizerKind; 6] = [
    OptimizerKind::Adam,
    OptimizerKind::RotatedAdam,
    OptimizerKind::AdaSgd,
    OptimizerKind::NesterovAdam,
    OptimizerKind::PipeDreamLr,
    OptimizerKind::DelayCompensation,
];

fn small_mlp() -> LandscapeConfig {
    LandscapeConfig::Mlp {
        layer_dims: vec![4, 6, 3],
        dataset_seed: 2,
        n_samples: 48,
        input_condition: 1.0,
        batch_size: Some(16),
    }
}

fn small_mlp_run(kind: OptimizerKind, staleness: StalenessConfig) -> RunConfig {
    RunConfig {
        seed: 9,
        max_steps: 80,
        loss_threshold: None,
        log_every: 1,
        landscape: small_mlp(),
        optimizer: OptimizerConfig::new(kind, AdamHyper {
            eta: 0.01,
            ..AdamHyper::default()
        }),
        estimation: (kind == OptimizerKind::RotatedAdam)
            .then(|| EstimationConfig::new(Source::Second, Geometry::Bilateral)),
        staleness,
    }
}

/// Smallest second-moment entry seen over a delayed MLP run, per optimizer.
pub fn min_second_moment() -> Result<f64> {
    let mut lowest = f64::INFINITY;
    for kind in ALL_OPTIMIZERS {
        let (landscape, mut params) = small_mlp().build(9)?;
        let cfg = small_mlp_run(kind, StalenessConfig::uniform(2));
        let mut opt = Optimizer::new(cfg.optimizer, cfg.estimation, &landscape.param_shapes())?;
        for _ in 0..50 {
            let (_, g) = landscape.loss_and_grad(&params, None)?;
            opt.step(&mut params, &g, &vec![0; g.len()])?;
            for slot in &opt.state().slots {
                lowest = lowest.min(slot.v.as_slice().iter().copied().fold(f64::INFINITY, f64::min));
            }
            lowest = lowest.min(opt.state().vbar);
        }
    }
    Ok(lowest)
}

/// Plain Adam iterations on the misaligned quadratic are non-decreasing in τ.
pub fn delay_monotone() -> Result<(bool, Vec<u64>)> {
    let iters = QUADRATIC_TAUS
        .iter()
        .map(|&t| Ok(run_experiment(&quadratic_config(45.0, t, false))?.summary.iterations_to_threshold.unwrap_or(u64::MAX)))
        .collect::<Result<Vec<_>>>()?;
    Ok((iters.windows(2).all(|w| w[0] <= w[1]), iters))
}

/// `τ = 0` through the harness against a bare loop without any stash, for
/// every optimizer; true when all final parameters agree bit for bit.
pub fn zero_delay_bypass() -> Result<bool> {
    let mut same = true;
    for kind in ALL_OPTIMIZERS {
        let cfg = small_mlp_run(kind, StalenessConfig::uniform(0));
        let record = run_experiment(&cfg)?;
        let (landscape, mut params) = cfg.landscape.build(cfg.seed)?;
        let mut opt = Optimizer::new(cfg.optimizer.clone(), cfg.estimation, &landscape.param_shapes())?;
        let mut batches = SeededRng::stream(cfg.seed, Stream::Batches);
        for _ in 0..cfg.max_steps {
            let batch = batches.sample_indices(48, 16);
            let (_, g) = landscape.loss_and_grad(&params, Some(&batch))?;
            opt.step(&mut params, &g, &vec![0; g.len()])?;
        }
        same &= params
            .iter()
            .zip(&record.final_params)
            .all(|(a, b)| a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    Ok(same)
}

/// Prediction mode with `τ = 0` produces the same artifacts as stashing.
pub fn prediction_degenerates() -> Result<bool> {
    let stash = small_mlp_run(OptimizerKind::Adam, StalenessConfig::uniform(0));
    let mut predict = stash.clone();
    predict.staleness.mode = StalenessMode::Prediction;
    let a = run_experiment(&stash)?;
    let b = run_experiment(&predict)?;
    Ok(a.trace == b.trace && a.final_params == b.final_params)
}

/// Largest stash size seen, in snapshots and in matrices, for two groups.
pub fn stash_capacity(tau: u64, steps: usize) -> (usize, usize) {
    let mut buf = StashBuffer::new(tau, vec![Matrix::zeros(2, 2), Matrix::zeros(1, 3)]);
    let (mut snapshots, mut matrices) = (buf.len(), buf.stored_matrices());
    for k in 0..steps {
        buf.advance(vec![Matrix::identity(2).scale(k as f64), Matrix::zeros(1, 3)]);
        snapshots = snapshots.max(buf.len());
        matrices = matrices.max(buf.stored_matrices());
    }
    (snapshots, matrices)
}

/// Stage counts never grow with device memory, and `P·n_max ≥ L`.
pub fn stage_count_laws() -> Result<bool> {
    let cfg = StageTableConfig::from_toml(STAGE_TABLE_FIXTURE)?;
    let mut devices = cfg.devices.clone();
    devices.sort_by_key(|d| d.memory_bytes);
    let mut ok = true;
    for model in &cfg.models {
        let results: Vec<_> = devices.iter().map(|d| required_stages(&model.on(d))).collect();
        ok &= results.windows(2).all(|w| w[1].p <= w[0].p);
        ok &= results.iter().all(|r| r.n_max == 0 || r.p as u128 * r.n_max as u128 >= model.l as u128);
    }
    Ok(ok)
}

pub fn self_slowdown_is_one() -> Result<bool> {
    let r = run_experiment(&quadratic_config(45.0, 0, false))?;
    Ok(slowdown_ratio(&r, &r)? == 1.0)
}

/// Worst orthonormality error after repeated refreshes on random statistics,
/// and worst change (ignoring column signs) of an exact eigenbasis refreshed
/// against its own constant statistic.
pub fn refresh_laws() -> Result<(f64, f64)> {
    let mut rng = oracle_rng(31);
    let mut ortho: f64 = 0.0;
    for geometry in [Geometry::Unilateral, Geometry::Bilateral] {
        for source in [Source::First, Source::Second] {
            let cfg = EstimationConfig {
                beta2: 0.9,
                ..EstimationConfig::new(source, geometry)
            };
            let mut state = init_basis(4, 6, &cfg);
            for _ in 0..30 {
                let g = rng.normal_matrix(4, 6, 1.0);
                accumulate_statistics(&mut state, &g, &cfg)?;
                refresh_basis(&mut state, &g, &cfg)?;
                ortho = ortho.max(orthonormality_error(state.u())).max(orthonormality_error(state.v()));
            }
        }
    }

    let cfg = EstimationConfig {
        beta2: 0.0,
        ..EstimationConfig::new(Source::First, Geometry::Bilateral)
    };
    let mut drift: f64 = 0.0;
    for _ in 0..10 {
        let left = rng.orthogonal(3);
        let right = rng.orthogonal(3);
        let m = matmul(&matmul(&left, &Matrix::from_diag(&[2.0, 1.0, 0.5])?)?, &right.transpose())?;
        let mut state = init_basis(3, 3, &cfg);
        let u = jacobi_eigen(&crate::linalg::matmul_nt(&m, &m)?)?.vectors;
        let v = jacobi_eigen(&crate::linalg::matmul_tn(&m, &m)?)?.vectors;
        state.set_bases(u.clone(), v.clone())?;
        refresh_basis(&mut state, &m, &cfg)?;
        for (before, after) in [(&u, state.u()), (&v, state.v())] {
            let d = before.map(f64::abs).sub(&after.map(f64::abs))?.max_abs();
            drift = drift.max(d);
        }
    }
    Ok((ortho, drift))
}

/// Smallest `‖V diag(λ) Vᵀ‖₁₁ − ‖diag(λ)‖₁₁` over random rotations of random
/// PSD spectra (negative means the diagonal was not the minimum).
pub fn diagonal_minimum_margin() -> Result<f64> {
    let mut rng = oracle_rng(32);
    let mut margin = f64::INFINITY;
    for _ in 0..50 {
        let n = 2 + rng.below(5) as usize;
        let lam = jacobi_eigen(&random_spd(&mut rng, n))?.values;
        let d = Matrix::from_diag(&lam)?;
        let v = rng.orthogonal(n);
        let rotated = matmul(&matmul(&v, &d)?, &v.transpose())?;
        margin = margin.min(one_one_norm(&rotated) - one_one_norm(&d));
    }
    Ok(margin)
}

/// Largest `(loss − r²) / (A + |c|)²` along random rays of the spiral.
pub fn spiral_ray_excess() -> f64 {
    let spec = SpiralSpec::default();
    let bound = (spec.amplitude + spec.offset.abs()).powi(2);
    let mut rng = oracle_rng(33);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let theta = rng.uniform_range(-std::f64::consts::PI, std::f64::consts::PI);
        for k in 1..=200 {
            let r = k as f64 * 0.2;
            worst = worst.max((spec.loss_polar(r, theta) - r * r) / bound);
        }
    }
    worst
}
