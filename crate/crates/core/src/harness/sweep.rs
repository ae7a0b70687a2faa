use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{parse_toml, RunConfig};
use super::run::{run_experiment, slowdown_ratio, RunRecord};
use super::spiral::SpiralSweepConfig;
use crate::eigenbasis::{EstimationConfig, Geometry, Source};
use crate::error::{Error, Result};
use crate::optim::OptimizerKind;
use crate::staleness::StalenessConfig;

/// A sweep file: a base run plus either a grid or a spiral probe sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: RunConfig,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub spiral: Option<SpiralSweepConfig>,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = parse_toml(text)?;
        cfg.base.validate()?;
        match (&cfg.grid, &cfg.spiral) {
            (Some(_), Some(_)) => Err(Error::config("spiral", "a sweep has either [grid] or [spiral], not both")),
            (None, None) => Err(Error::config("grid", "missing [grid] or [spiral] table")),
            (Some(g), None) => {
                g.cells(&cfg.base)?;
                Ok(cfg)
            }
            (None, Some(_)) => Ok(cfg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Strategy {
    pub source: Source,
    pub geometry: Geometry,
}

/// Axes of the grid; an empty axis keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub tau: Vec<u64>,
    /// Pipeline depths; each maps layers onto 1F1B stage delays.
    #[serde(default)]
    pub stages: Vec<usize>,
    #[serde(default)]
    pub optimizer: Vec<OptimizerKind>,
    /// Applied to `rotated_adam` cells only.
    #[serde(default)]
    pub estimation: Vec<Strategy>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub dc_lambda: Vec<f64>,
}

/// One grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub stages: Option<usize>,
    pub config: RunConfig,
}

impl GridSpec {
    /// Cartesian product in a fixed order: seed, optimizer, strategy,
    /// λ, then delay.
    pub fn cells(&self, base: &RunConfig) -> Result<Vec<Cell>> {
        if !self.tau.is_empty() && !self.stages.is_empty() {
            return Err(Error::config("grid.stages", "cannot be combined with grid.tau"));
        }
        if self.stages.contains(&0) {
            return Err(Error::config("grid.stages", "entries must be at least 1"));
        }
        let or_base = |v: &[u64], b: u64| if v.is_empty() { vec![b] } else { v.to_vec() };
        let seeds = or_base(&self.seeds, base.seed);
        let opts = if self.optimizer.is_empty() { vec![base.optimizer.name] } else { self.optimizer.clone() };
        let lambdas = if self.dc_lambda.is_empty() { vec![base.optimizer.dc_lambda] } else { self.dc_lambda.clone() };
        let delays: Vec<(StalenessConfig, Option<usize>)> = if !self.stages.is_empty() {
            self.stages
                .iter()
                .map(|&p| {
                    let s = StalenessConfig {
                        mode: base.staleness.mode,
                        prediction_horizon_scale: base.staleness.prediction_horizon_scale,
                        ..StalenessConfig::pipeline(p)
                    };
                    (s, Some(p))
                })
                .collect()
        } else if !self.tau.is_empty() {
            self.tau
                .iter()
                .map(|&t| {
                    let s = StalenessConfig {
                        tau: t,
                        per_stage: None,
                        ..base.staleness.clone()
                    };
                    (s, None)
                })
                .collect()
        } else {
            vec![(base.staleness.clone(), None)]
        };

        let mut cells = Vec::new();
        for &seed in &seeds {
            for &opt in &opts {
                let strategies: Vec<Option<EstimationConfig>> = match opt {
                    OptimizerKind::RotatedAdam if !self.estimation.is_empty() => {
                        let template = base.estimation.unwrap_or_else(|| EstimationConfig::new(Source::Second, Geometry::Bilateral));
                        self.estimation
                            .iter()
                            .map(|s| {
                                Some(EstimationConfig {
                                    source: s.source,
                                    geometry: s.geometry,
                                    ..template
                                })
                            })
                            .collect()
                    }
                    _ => vec![base.estimation],
                };
                let lams: &[f64] = if opt == OptimizerKind::DelayCompensation { &lambdas } else { &lambdas[..1] };
                for est in &strategies {
                    for &lam in lams {
                        for (stale, stages) in &delays {
                            let mut cfg = base.clone();
                            cfg.seed = seed;
                            cfg.optimizer.name = opt;
                            cfg.optimizer.dc_lambda = lam;
                            cfg.estimation = *est;
                            cfg.staleness = stale.clone();
                            cfg.validate()?;
                            cells.push(Cell {
                                index: cells.len(),
                                stages: *stages,
                                config: cfg,
                            });
                        }
                    }
                }
            }
        }
        Ok(cells)
    }
}

/// Result of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub index: usize,
    pub fingerprint: String,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub strategy: Option<Strategy>,
    pub dc_lambda: f64,
    pub tau: u64,
    pub stages: Option<usize>,
    pub iterations_to_threshold: Option<u64>,
    pub final_loss: f64,
    pub diverged: bool,
    /// Against the matching cell with zero delay, when both reached the threshold.
    pub slowdown_ratio: Option<f64>,
}

/// Runs every cell in parallel; results keep grid order.
pub fn run_grid(base: &RunConfig, grid: &GridSpec) -> Result<Vec<CellResult>> {
    let cells = grid.cells(base)?;
    let records: Vec<Result<RunRecord>> = cells.par_iter().map(|c| run_experiment(&c.config)).collect();
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    let key = |c: &Cell| {
        (
            c.config.seed,
            c.config.optimizer.name,
            c.config.estimation.map(|e| (e.source, e.geometry)),
            c.config.optimizer.dc_lambda.to_bits(),
        )
    };
    let mut out = Vec::with_capacity(cells.len());
    for (cell, rec) in cells.iter().zip(&records) {
        let baseline = cells
            .iter()
            .position(|o| key(o) == key(cell) && o.config.staleness.max_delay() == 0);
        let ratio = baseline.and_then(|b| slowdown_ratio(rec, &records[b]).ok());
        out.push(CellResult {
            index: cell.index,
            fingerprint: cell.config.fingerprint(),
            seed: cell.config.seed,
            optimizer: cell.config.optimizer.name,
            strategy: match cell.config.optimizer.name {
                OptimizerKind::RotatedAdam => cell.config.estimation.map(|e| Strategy {
                    source: e.source,
                    geometry: e.geometry,
                }),
                _ => None,
            },
            dc_lambda: cell.config.optimizer.dc_lambda,
            tau: cell.config.staleness.max_delay(),
            stages: cell.stages,
            iterations_to_threshold: rec.summary.iterations_to_threshold,
            final_loss: rec.summary.final_loss,
            diverged: rec.summary.diverged,
            slowdown_ratio: ratio,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SWEEP: &str = r#"
        [base]
        max_steps = 200
        loss_threshold = 15.0
        [base.landscape]
        kind = "quadratic"
        eigenvalues = [10.0, 1.0]
        angle_deg = 45.0
        [base.optimizer]
        name = "adam"
        eta = 1.0
        beta1 = 0.0
        beta2 = 0.1
        weight_decay = 0.0
        grad_clip = "none"
        [base.estimation]
        source = "second"
        geometry = "bilateral"
        beta2 = 0.1
        update_frequency = 1
        [grid]
        tau = [0, 2]
        optimizer = ["adam", "rotated_adam"]
        estimation = [{ source = "second", geometry = "bilateral" }, { source = "first", geometry = "bilateral" }]
    "#;

    #[test]
    fn grid_expands_in_order() {
        let cfg = SweepConfig::from_toml(SWEEP).unwrap();
        let cells = cfg.grid.as_ref().unwrap().cells(&cfg.base).unwrap();
        assert_eq!(cells.len(), 2 + 2 * 2);
        assert_eq!(cells[0].config.optimizer.name, OptimizerKind::Adam);
        assert_eq!(cells[1].config.staleness.tau, 2);
    }

    #[test]
    fn grid_runs_and_ratios() {
        let cfg = SweepConfig::from_toml(SWEEP).unwrap();
        let out = run_grid(&cfg.base, cfg.grid.as_ref().unwrap()).unwrap();
        assert_eq!(out[0].slowdown_ratio, Some(1.0));
        assert!(out[1].slowdown_ratio.unwrap() > 1.0);
        let again = run_grid(&cfg.base, cfg.grid.as_ref().unwrap()).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn conflicting_axes() {
        let bad = SWEEP.replace("tau = [0, 2]", "tau = [0, 2]\nstages = [1, 2]");
        assert!(matches!(SweepConfig::from_toml(&bad), Err(Error::Config { key, .. }) if key == "grid.stages"));
    }
}
