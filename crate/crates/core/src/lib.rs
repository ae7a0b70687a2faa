//! Simulation of delayed-gradient optimization: dense linear algebra,
//! test landscapes, Adam with basis rotation and its baselines, a staleness
//! engine, a pipeline memory model, and a seeded experiment harness.

// Range checks use `!(x > 0.0)` so that NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eigenbasis;
pub mod error;
pub mod harness;
pub mod landscape;
pub mod linalg;
pub mod optim;
pub mod pipemodel;
pub mod rng;
pub mod staleness;
pub mod verify;

pub use eigenbasis::{BasisState, EstimationConfig, Geometry, Source};
pub use error::{Error, Result};
pub use harness::{run_experiment, RunConfig, RunRecord};
pub use landscape::{Landscape, MlpSpec, QuadraticSpec, SpiralSpec};
pub use linalg::Matrix;
pub use optim::{AdamHyper, Optimizer, OptimizerConfig, OptimizerKind, OptimizerState};
pub use pipemodel::{PipelineConfig, StageResult};
pub use staleness::{StalenessConfig, StalenessMode, StashBuffer};
