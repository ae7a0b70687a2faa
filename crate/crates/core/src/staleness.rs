//! Delayed gradients from a ring buffer of parameter snapshots.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::Landscape;
use crate::linalg::Matrix;
use crate::optim::Optimizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StalenessMode {
    /// Gradient at the exact stashed weights `w_{t−τ}`.
    #[default]
    Stashing,
    /// Gradient at `w_{t−τ} − τ·scale·η·d`, with `d` the optimizer's
    /// current normalized direction.
    Prediction,
}

/// Uniform delay `tau`, or per-stage delays mapped onto parameter groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StalenessConfig {
    #[serde(default)]
    pub tau: u64,
    /// Delay of each pipeline stage, first stage first. Overrides `tau`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_stage: Option<Vec<u64>>,
    #[serde(default)]
    pub mode: StalenessMode,
    #[serde(default = "default_horizon_scale")]
    pub prediction_horizon_scale: f64,
}

fn default_horizon_scale() -> f64 {
    1.0
}

impl Default for StalenessConfig {
    fn default() -> Self {
        Self::uniform(0)
    }
}

impl StalenessConfig {
    pub fn uniform(tau: u64) -> Self {
        Self {
            tau,
            per_stage: None,
            mode: StalenessMode::Stashing,
            prediction_horizon_scale: default_horizon_scale(),
        }
    }

    /// 1F1B delays for a `p`-stage pipeline.
    pub fn pipeline(p: usize) -> Self {
        Self {
            per_stage: Some(stage_delay_profile(p)),
            ..Self::uniform(0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(ps) = &self.per_stage {
            if ps.is_empty() {
                return Err(Error::config("staleness.per_stage", "needs at least one stage"));
            }
        }
        if !self.prediction_horizon_scale.is_finite() {
            return Err(Error::config("staleness.prediction_horizon_scale", "must be finite"));
        }
        Ok(())
    }

    /// Delay applied to each of `groups` parameter matrices.
    pub fn group_delays(&self, groups: usize) -> Vec<u64> {
        match &self.per_stage {
            None => vec![self.tau; groups],
            Some(stages) => (1..=groups)
                .map(|i| stages[layer_to_stage(i, groups, stages.len()) - 1])
                .collect(),
        }
    }

    pub fn max_delay(&self) -> u64 {
        match &self.per_stage {
            None => self.tau,
            Some(s) => s.iter().copied().max().unwrap_or(0),
        }
    }
}

/// `(P−1, P−2, …, 0)`.
pub fn stage_delay_profile(p: usize) -> Vec<u64> {
    (0..p.max(1)).rev().map(|d| d as u64).collect()
}

/// Stage (1-based) of layer `i` (1-based) out of `layers`, for `p` stages:
/// `⌈i·P/L⌉`.
pub fn layer_to_stage(i: usize, layers: usize, p: usize) -> usize {
    (i * p).div_ceil(layers).clamp(1, p)
}

/// The last `capacity` parameter snapshots, newest at the back.
#[derive(Debug, Clone, PartialEq)]
pub struct StashBuffer {
    snapshots: VecDeque<Vec<Matrix>>,
    capacity: usize,
}

impl StashBuffer {
    /// Buffer for delays up to `tau`, holding `initial` as step 0.
    pub fn new(tau: u64, initial: Vec<Matrix>) -> Self {
        let capacity = tau as usize + 1;
        let mut snapshots = VecDeque::with_capacity(capacity);
        snapshots.push_back(initial);
        Self { snapshots, capacity }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Parameter matrices currently held.
    pub fn stored_matrices(&self) -> usize {
        self.snapshots.iter().map(Vec::len).sum()
    }

    pub fn current(&self) -> &[Matrix] {
        self.snapshots.back().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Delay actually available for a requested `delay` (warm-up ramp).
    pub fn effective_delay(&self, delay: u64) -> u64 {
        delay.min(self.snapshots.len() as u64 - 1)
    }

    /// Snapshot from `delay` steps ago, or the oldest one held.
    pub fn snapshot(&self, delay: u64) -> &[Matrix] {
        let d = self.effective_delay(delay) as usize;
        &self.snapshots[self.snapshots.len() - 1 - d]
    }

    /// Pushes the newest parameters and evicts anything older than `tau` steps.
    pub fn advance(&mut self, w_new: Vec<Matrix>) {
        if self.snapshots.len() == self.capacity {
            self.snapshots.pop_front();
        }
        self.snapshots.push_back(w_new);
    }
}

/// Gradients served for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayedGradient {
    pub grads: Vec<Matrix>,
    /// Effective delay per parameter group.
    pub delays: Vec<u64>,
    /// The parameters each group's gradient was taken at.
    pub evaluated_at: Vec<Matrix>,
}

/// Gradient of every group at its delayed (stashed or predicted) parameters.
/// Groups sharing a delay share one evaluation.
pub fn delayed_gradient(
    landscape: &Landscape,
    stash: &StashBuffer,
    batch: Option<&[usize]>,
    config: &StalenessConfig,
    optimizer: Option<&Optimizer>,
) -> Result<DelayedGradient> {
    let groups = stash.current().len();
    let delays: Vec<u64> = config
        .group_delays(groups)
        .into_iter()
        .map(|d| stash.effective_delay(d))
        .collect();
    let mut distinct = delays.clone();
    distinct.sort_unstable();
    distinct.dedup();

    let mut grads = vec![None; groups];
    let mut evaluated_at = vec![None; groups];
    for &d in &distinct {
        let point = evaluation_point(stash, d, config, optimizer)?;
        let (_, g) = landscape.loss_and_grad(&point, batch)?;
        for (i, (gi, wi)) in g.into_iter().zip(point).enumerate() {
            if delays[i] == d {
                grads[i] = Some(gi);
                evaluated_at[i] = Some(wi);
            }
        }
    }
    Ok(DelayedGradient {
        grads: grads.into_iter().flatten().collect(),
        delays,
        evaluated_at: evaluated_at.into_iter().flatten().collect(),
    })
}

fn evaluation_point(
    stash: &StashBuffer,
    delay: u64,
    config: &StalenessConfig,
    optimizer: Option<&Optimizer>,
) -> Result<Vec<Matrix>> {
    let stale = stash.snapshot(delay).to_vec();
    let opt = match (config.mode, optimizer) {
        (StalenessMode::Prediction, Some(o)) if delay > 0 => o,
        _ => return Ok(stale),
    };
    let step = delay as f64 * config.prediction_horizon_scale * opt.config().hyper.eta;
    stale
        .into_iter()
        .enumerate()
        .map(|(i, w)| w.sub(&opt.direction(i)?.scale(step)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::QuadraticSpec;

    fn col(x: f64) -> Vec<Matrix> {
        vec![Matrix::column(&[x, -x]).unwrap()]
    }

    #[test]
    fn profile_and_mapping() {
        assert_eq!(stage_delay_profile(1), vec![0]);
        assert_eq!(stage_delay_profile(4), vec![3, 2, 1, 0]);
        assert_eq!(*stage_delay_profile(9).iter().max().unwrap(), 8);
        let stages: Vec<usize> = (1..=8).map(|i| layer_to_stage(i, 8, 4)).collect();
        assert_eq!(stages, vec![1, 1, 2, 2, 3, 3, 4, 4]);
        assert_eq!(StalenessConfig::pipeline(4).group_delays(8), vec![3, 3, 2, 2, 1, 1, 0, 0]);
        assert_eq!(StalenessConfig::pipeline(4).group_delays(2), vec![2, 0]);
    }

    #[test]
    fn capacity_one_holds_only_current() {
        let mut s = StashBuffer::new(0, col(0.0));
        for k in 1..5 {
            s.advance(col(k as f64));
            assert_eq!(s.len(), 1);
            assert_eq!(s.snapshot(3), col(k as f64).as_slice());
        }
    }

    #[test]
    fn ring_arithmetic_and_memory() {
        let tau = 3;
        let mut s = StashBuffer::new(tau, col(0.0));
        for k in 1..=10u64 {
            assert_eq!(s.effective_delay(tau), (k - 1).min(tau));
            s.advance(col(k as f64));
            assert!(s.stored_matrices() <= tau as usize + 1);
        }
        assert_eq!(s.snapshot(tau), col(7.0).as_slice());
        assert_eq!(s.stored_matrices(), 4);
    }

    #[test]
    fn zero_delay_is_fresh_gradient() {
        let q = QuadraticSpec::planar([10.0, 1.0], 30.0).unwrap();
        let land = Landscape::Quadratic(q);
        let s = StashBuffer::new(0, col(1.5));
        let dg = delayed_gradient(&land, &s, None, &StalenessConfig::uniform(0), None).unwrap();
        assert_eq!(dg.grads, land.loss_and_grad(&col(1.5), None).unwrap().1);
        assert_eq!(dg.delays, vec![0]);
    }
}
