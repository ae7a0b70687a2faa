use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::landscape::{Landscape, SpiralSpec};
use crate::linalg::{jacobi_eigen, Matrix};
use crate::optim::Optimizer;
use crate::rng::{SeededRng, Stream};
use crate::staleness::StashBuffer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpiralSweepConfig {
    #[serde(default = "d_probes")]
    pub n_probes: usize,
    /// Delay injected into the forked run.
    #[serde(default = "d_inject")]
    pub inject_tau: u64,
    #[serde(default = "d_traverse")]
    pub traverse_deg: f64,
    /// Iterations allowed for one traversal before the probe is skipped.
    #[serde(default = "d_budget")]
    pub probe_budget: u64,
    /// Probes with `|sin 2φ|` below this are aligned (φ: angle of the dominant
    /// Hessian eigenvector).
    #[serde(default = "d_aligned")]
    pub aligned_below: f64,
    /// Probes with `|sin 2φ|` above this are misaligned.
    #[serde(default = "d_misaligned")]
    pub misaligned_above: f64,
    /// Central-difference step for the probe Hessian.
    #[serde(default = "d_fd")]
    pub hessian_step: f64,
}

fn d_probes() -> usize {
    200
}
fn d_inject() -> u64 {
    1
}
fn d_traverse() -> f64 {
    3.0
}
fn d_budget() -> u64 {
    5000
}
fn d_aligned() -> f64 {
    0.5
}
fn d_misaligned() -> f64 {
    0.866
}
fn d_fd() -> f64 {
    1e-5
}

impl Default for SpiralSweepConfig {
    fn default() -> Self {
        Self {
            n_probes: d_probes(),
            inject_tau: d_inject(),
            traverse_deg: d_traverse(),
            probe_budget: d_budget(),
            aligned_below: d_aligned(),
            misaligned_above: d_misaligned(),
            hessian_step: d_fd(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Aligned,
    Misaligned,
    Between,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub base_step: u64,
    /// Polar angle of the probe point, in degrees within `(-180, 180]`.
    pub angle_deg: f64,
    /// `|sin 2φ|` of the dominant Hessian eigenvector.
    pub misalignment: f64,
    pub region: Region,
    pub iters_no_delay: u64,
    pub iters_delay: u64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiralSweep {
    pub probes: Vec<ProbeResult>,
    pub skipped: usize,
    pub base_steps: u64,
    pub aligned_mean: Option<f64>,
    pub misaligned_mean: Option<f64>,
}

/// Runs the undelayed base trajectory, forks it at `n_probes` random
/// iterations, and compares iterations needed to sweep `traverse_deg` of polar
/// angle with and without an injected delay.
pub fn spiral_slowdown_sweep(cfg: &RunConfig, sweep: &SpiralSweepConfig) -> Result<SpiralSweep> {
    cfg.validate()?;
    let (landscape, params) = cfg.landscape.build(cfg.seed)?;
    let spec = match &landscape {
        Landscape::Spiral(s) => *s,
        _ => return Err(Error::config("landscape.kind", "spiral sweep needs the spiral landscape")),
    };
    let mut opt = Optimizer::new(cfg.optimizer.clone(), cfg.estimation, &landscape.param_shapes())?;

    // Base run without delay, keeping every iterate and optimizer state.
    let mut states = vec![(params.clone(), opt.clone())];
    let mut w = params;
    for _ in 0..cfg.max_steps {
        let Ok((_, g)) = landscape.loss_and_grad(&w, None) else { break };
        if opt.step(&mut w, &g, &[0]).is_err() {
            break;
        }
        states.push((w.clone(), opt.clone()));
    }
    let base_steps = states.len() as u64 - 1;

    let mut rng = SeededRng::stream(cfg.seed, Stream::Probes);
    let mut probes = Vec::new();
    let mut skipped = 0;
    for _ in 0..sweep.n_probes {
        if base_steps < 2 {
            skipped += 1;
            continue;
        }
        let t0 = 1 + rng.below(base_steps - 1) as usize;
        let plain = traverse(&landscape, &states, t0, 0, sweep)?;
        let delayed = traverse(&landscape, &states, t0, sweep.inject_tau, sweep)?;
        let (Some(a), Some(b)) = (plain, delayed) else {
            skipped += 1;
            continue;
        };
        let point = &states[t0].0[0];
        let xy = [point[(0, 0)], point[(1, 0)]];
        let m = probe_misalignment(&spec, xy, sweep.hessian_step)?;
        let region = if m < sweep.aligned_below {
            Region::Aligned
        } else if m > sweep.misaligned_above {
            Region::Misaligned
        } else {
            Region::Between
        };
        probes.push(ProbeResult {
            base_step: t0 as u64,
            angle_deg: xy[1].atan2(xy[0]).to_degrees(),
            misalignment: m,
            region,
            iters_no_delay: a,
            iters_delay: b,
            ratio: if a == b { 1.0 } else { b as f64 / a as f64 },
        });
    }
    let mean = |r: Region| {
        let v: Vec<f64> = probes.iter().filter(|p| p.region == r).map(|p| p.ratio).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    Ok(SpiralSweep {
        aligned_mean: mean(Region::Aligned),
        misaligned_mean: mean(Region::Misaligned),
        probes,
        skipped,
        base_steps,
    })
}

/// Iterations from base step `t0` until the unwrapped polar angle has moved by
/// `traverse_deg`, under a constant delay `tau` whose history is taken from the
/// base run.
fn traverse(
    landscape: &Landscape,
    states: &[(Vec<Matrix>, Optimizer)],
    t0: usize,
    tau: u64,
    sweep: &SpiralSweepConfig,
) -> Result<Option<u64>> {
    let start = t0.saturating_sub(tau as usize);
    let mut stash = StashBuffer::new(tau, states[start].0.clone());
    for s in &states[start + 1..=t0] {
        stash.advance(s.0.clone());
    }
    let (mut w, mut opt) = states[t0].clone();
    let target = sweep.traverse_deg.to_radians();
    let angle = |w: &[Matrix]| w[0][(1, 0)].atan2(w[0][(0, 0)]);
    let mut prev = angle(&w);
    let mut swept = 0.0f64;
    for k in 1..=sweep.probe_budget {
        let Ok((_, g)) = landscape.loss_and_grad(stash.snapshot(tau), None) else {
            return Ok(None);
        };
        if opt.step(&mut w, &g, &[tau]).is_err() {
            return Ok(None);
        }
        stash.advance(w.clone());
        let th = angle(&w);
        let mut d = th - prev;
        d -= std::f64::consts::TAU * (d / std::f64::consts::TAU).round();
        swept += d;
        prev = th;
        if swept.abs() >= target {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// `|sin 2φ|` where φ is the angle of the eigenvector with the largest
/// |eigenvalue| of the central-difference Hessian at `xy`.
pub fn probe_misalignment(spec: &SpiralSpec, xy: [f64; 2], h: f64) -> Result<f64> {
    let mut hess = Matrix::zeros(2, 2);
    for j in 0..2 {
        let (mut p, mut m) = (xy, xy);
        p[j] += h;
        m[j] -= h;
        let (_, gp) = spec.eval(p)?;
        let (_, gm) = spec.eval(m)?;
        for i in 0..2 {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    let eig = jacobi_eigen(&hess.symmetrized())?;
    let k = if eig.values[0].abs() >= eig.values[1].abs() { 0 } else { 1 };
    let phi = eig.vectors[(1, k)].atan2(eig.vectors[(0, k)]);
    Ok((2.0 * phi).sin().abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::LandscapeConfig;
    use crate::optim::{AdamHyper, OptimizerConfig, OptimizerKind};
    use crate::staleness::StalenessConfig;

    fn spiral_cfg() -> RunConfig {
        RunConfig {
            seed: 1,
            max_steps: 400,
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

    #[test]
    fn null_injection_gives_unit_ratios() {
        let sweep = SpiralSweepConfig {
            n_probes: 20,
            inject_tau: 0,
            ..SpiralSweepConfig::default()
        };
        let out = spiral_slowdown_sweep(&spiral_cfg(), &sweep).unwrap();
        assert!(out.probes.iter().all(|p| p.ratio == 1.0));
        assert_eq!(out.probes.len() + out.skipped, 20);
    }

    #[test]
    fn axis_aligned_hessian_scores_zero() {
        // On the x-axis far out, the radial direction is x.
        let m = probe_misalignment(&SpiralSpec::default(), [30.0, 1e-3], 1e-5).unwrap();
        assert!(m < 0.5);
    }

    #[test]
    fn rejects_other_landscapes() {
        let mut cfg = spiral_cfg();
        cfg.landscape = LandscapeConfig::Quadratic {
            eigenvalues: vec![1.0],
            angle_deg: None,
            rotation_seed: None,
            start: Some(vec![1.0]),
        };
        assert!(spiral_slowdown_sweep(&cfg, &SpiralSweepConfig::default()).is_err());
    }
}
