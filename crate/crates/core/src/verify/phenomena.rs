//! Drivers for the delay phenomenology experiments.

use rayon::prelude::*;

use crate::eigenbasis::{EstimationConfig, Geometry, Source};
use crate::error::Result;
use crate::harness::{run_experiment, spiral_slowdown_sweep, slowdown_ratio, LandscapeConfig, RunConfig, SpiralSweep, SpiralSweepConfig};
use crate::optim::{AdamHyper, OptimizerConfig, OptimizerKind};
use crate::staleness::StalenessConfig;

/// Planar quadratic run: `λ = (10, 1)`, `η = 1`, `β₁ = 0`, `β₂ = 0.1`,
/// threshold 15, no clipping or weight decay.
pub fn quadratic_config(angle_deg: f64, tau: u64, rotated: bool) -> RunConfig {
    let name = if rotated { OptimizerKind::RotatedAdam } else { OptimizerKind::Adam };
    RunConfig {
        seed: 0,
        max_steps: 1000,
        loss_threshold: Some(15.0),
        log_every: 1,
        landscape: LandscapeConfig::Quadratic {
            eigenvalues: vec![10.0, 1.0],
            angle_deg: Some(angle_deg),
            rotation_seed: None,
            start: None,
        },
        optimizer: OptimizerConfig::new(name, AdamHyper::plain(1.0, 0.0, 0.1)),
        estimation: rotated.then(|| EstimationConfig {
            beta2: 0.999,
            update_frequency: 10,
            ..EstimationConfig::new(Source::Second, Geometry::Bilateral)
        }),
        staleness: StalenessConfig::uniform(tau),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticPhenomena {
    /// Plain Adam iterations for τ = 0, 1, 2, 4 on the aligned quadratic.
    pub aligned: [u64; 4],
    /// Same on the 45° quadratic.
    pub misaligned: [u64; 4],
    pub aligned_ratio: f64,
    pub misaligned_ratio: f64,
    /// Rotated Adam, misaligned, τ = 2.
    pub rotated_misaligned_tau2: u64,
}

pub const QUADRATIC_TAUS: [u64; 4] = [0, 1, 2, 4];

pub fn quadratic_phenomena() -> Result<QuadraticPhenomena> {
    let iters = |angle: f64, tau: u64, rotated: bool| -> Result<(u64, crate::harness::RunRecord)> {
        let r = run_experiment(&quadratic_config(angle, tau, rotated))?;
        let it = r.summary.iterations_to_threshold.unwrap_or(u64::MAX);
        Ok((it, r))
    };
    let mut aligned = [0; 4];
    let mut misaligned = [0; 4];
    let mut recs = Vec::new();
    for (k, &tau) in QUADRATIC_TAUS.iter().enumerate() {
        let (a, ra) = iters(0.0, tau, false)?;
        let (m, rm) = iters(45.0, tau, false)?;
        aligned[k] = a;
        misaligned[k] = m;
        recs.push((ra, rm));
    }
    let aligned_ratio = slowdown_ratio(&recs[2].0, &recs[0].0)?;
    let misaligned_ratio = slowdown_ratio(&recs[2].1, &recs[0].1)?;
    let (rot, _) = iters(45.0, 2, true)?;
    Ok(QuadraticPhenomena {
        aligned,
        misaligned,
        aligned_ratio,
        misaligned_ratio,
        rotated_misaligned_tau2: rot,
    })
}

/// Spiral base run from `(r, θ) = (35, 0)` with `η = 0.1`, `β₁ = 0`, `β₂ = 0.9`.
pub fn spiral_config() -> RunConfig {
    RunConfig {
        seed: 0,
        max_steps: 20_000,
        loss_threshold: None,
        log_every: 1,
        landscape: LandscapeConfig::Spiral {
            amplitude: 20.0,
            frequency: 4.0,
            offset: 1.0,
            start_radius: 35.0,
            start_theta: 0.0,
        },
        optimizer: OptimizerConfig::new(OptimizerKind::Adam, AdamHyper::plain(0.1, 0.0, 0.9)),
        estimation: None,
        staleness: StalenessConfig::uniform(0),
    }
}

pub fn spiral_phenomena() -> Result<SpiralSweep> {
    spiral_slowdown_sweep(&spiral_config(), &SpiralSweepConfig::default())
}

/// The four estimation strategies, in reporting order.
pub const STRATEGIES: [(Source, Geometry); 4] = [
    (Source::Second, Geometry::Bilateral),
    (Source::Second, Geometry::Unilateral),
    (Source::First, Geometry::Bilateral),
    (Source::First, Geometry::Unilateral),
];

/// Three-layer tanh network on conditioned inputs under uniform delay 8.
pub fn mlp_config(seed: u64, strategy: Option<(Source, Geometry)>) -> RunConfig {
    let name = if strategy.is_some() { OptimizerKind::RotatedAdam } else { OptimizerKind::Adam };
    RunConfig {
        seed,
        max_steps: 6000,
        loss_threshold: Some(0.05),
        log_every: 100,
        landscape: LandscapeConfig::Mlp {
            layer_dims: vec![8, 16, 4],
            dataset_seed: 0,
            n_samples: 256,
            input_condition: 100.0,
            batch_size: None,
        },
        optimizer: OptimizerConfig::new(name, AdamHyper::plain(0.003, 0.9, 0.999)),
        estimation: strategy.map(|(s, g)| EstimationConfig {
            beta2: 0.9,
            update_frequency: 10,
            ..EstimationConfig::new(s, g)
        }),
        staleness: StalenessConfig::uniform(8),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpFidelity {
    pub seeds: u64,
    /// Mean iterations to threshold for plain Adam; runs that never reach it
    /// count as `max_steps`.
    pub adam: f64,
    /// Same for each entry of [`STRATEGIES`].
    pub rotated: [f64; 4],
    pub unreached: usize,
}

pub fn mlp_fidelity(seeds: u64) -> Result<MlpFidelity> {
    let variants: Vec<Option<(Source, Geometry)>> = std::iter::once(None).chain(STRATEGIES.map(Some)).collect();
    let jobs: Vec<(u64, usize)> = (0..seeds).flat_map(|s| (0..variants.len()).map(move |v| (s, v))).collect();
    let results: Vec<Result<(usize, Option<u64>, u64)>> = jobs
        .par_iter()
        .map(|&(seed, v)| {
            let cfg = mlp_config(seed, variants[v]);
            let r = run_experiment(&cfg)?;
            Ok((v, r.summary.iterations_to_threshold, cfg.max_steps))
        })
        .collect();
    let mut sums = [0.0; 5];
    let mut unreached = 0;
    for r in results {
        let (v, it, cap) = r?;
        if it.is_none() {
            unreached += 1;
        }
        sums[v] += it.unwrap_or(cap) as f64;
    }
    let n = seeds.max(1) as f64;
    Ok(MlpFidelity {
        seeds,
        adam: sums[0] / n,
        rotated: [sums[1] / n, sums[2] / n, sums[3] / n, sums[4] / n],
        unreached,
    })
}
