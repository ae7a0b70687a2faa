//! Adam, Adam with basis rotation, and the baselines, all as in-place steps
//! over a list of parameter matrices.
//!
//! Moment updates never bias-correct unless `bias_correction` is set, and
//! `epsilon` sits inside the square root: `m / sqrt(v + ε)`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::eigenbasis::{accumulate_statistics, init_basis, refresh_basis, BasisState, EstimationConfig};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Delay-compensation strengths swept by default.
pub const DC_LAMBDA_GRID: [f64; 4] = [0.04, 0.1, 0.5, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamHyper {
    #[serde(default = "d_eta")]
    pub eta: f64,
    #[serde(default = "d_beta1")]
    pub beta1: f64,
    #[serde(default = "d_beta2")]
    pub beta2: f64,
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    #[serde(default = "d_weight_decay")]
    pub weight_decay: f64,
    /// Global-norm clip threshold; `"none"` in config files disables it.
    #[serde(default = "d_clip", serialize_with = "ser_clip", deserialize_with = "de_clip")]
    pub grad_clip: Option<f64>,
    #[serde(default)]
    pub bias_correction: bool,
}

fn d_eta() -> f64 {
    1e-3
}
fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.999
}
fn d_epsilon() -> f64 {
    1e-16
}
fn d_weight_decay() -> f64 {
    0.01
}
fn d_clip() -> Option<f64> {
    Some(1.0)
}

fn ser_clip<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_str("none"),
    }
}

fn de_clip<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Clip {
        Value(f64),
        Word(String),
    }
    match Clip::deserialize(d)? {
        Clip::Value(x) => Ok(Some(x)),
        Clip::Word(w) if w == "none" => Ok(None),
        Clip::Word(w) => Err(serde::de::Error::custom(format!(
            "expected a number or \"none\", got \"{w}\""
        ))),
    }
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            eta: d_eta(),
            beta1: d_beta1(),
            beta2: d_beta2(),
            epsilon: d_epsilon(),
            weight_decay: d_weight_decay(),
            grad_clip: d_clip(),
            bias_correction: false,
        }
    }
}

impl AdamHyper {
    /// No clipping, no weight decay.
    pub fn plain(eta: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            eta,
            beta1,
            beta2,
            weight_decay: 0.0,
            grad_clip: None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config("optimizer.eta", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::config("optimizer.beta1", "must lie in [0, 1)"));
        }
        if !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::config("optimizer.beta2", "must lie in (0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("optimizer.epsilon", "must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("optimizer.weight_decay", "must be non-negative"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::config("optimizer.grad_clip", "must be positive or \"none\""));
            }
        }
        Ok(())
    }
}

/// Moments of one parameter matrix. `v` is the rotated second moment `Ṽ`
/// for rotated Adam and unused by AdaSGD.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub m: Matrix,
    pub v: Matrix,
    pub basis: Option<BasisState>,
}

impl MomentState {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            basis: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub slots: Vec<MomentState>,
    /// Number of completed steps; the step in progress is `step_count + 1`.
    pub step_count: u64,
    /// AdaSGD's scalar second moment.
    pub vbar: f64,
}

impl OptimizerState {
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        Self {
            slots: shapes.iter().map(|&(r, c)| MomentState::zeros(r, c)).collect(),
            step_count: 0,
            vbar: 0.0,
        }
    }
}

fn bias_factors(h: &AdamHyper, step: u64) -> (f64, f64) {
    if h.bias_correction {
        let t = step.min(i32::MAX as u64) as i32;
        (1.0 / (1.0 - h.beta1.powi(t)), 1.0 / (1.0 - h.beta2.powi(t)))
    } else {
        (1.0, 1.0)
    }
}

fn check_step_inputs(w: &Matrix, g: &Matrix, slot: &MomentState, step: u64) -> Result<()> {
    w.expect_same_shape("optimizer step", g)?;
    w.expect_same_shape("optimizer step", &slot.m)?;
    if !g.is_finite() {
        return Err(Error::NonFiniteGradient { step });
    }
    Ok(())
}

fn ema(old: &Matrix, new: &Matrix, beta: f64) -> Matrix {
    old.zip_map_unchecked(new, |a, b| beta * a + (1.0 - beta) * b)
}

fn apply_update(w: &mut Matrix, update: &Matrix, eta: f64, wd: f64) {
    *w = w.zip_map_unchecked(update, |x, u| x - eta * u - eta * wd * x);
}

fn scaled_direction(num: &Matrix, v: &Matrix, h: &AdamHyper, step: u64) -> Matrix {
    let (c1, c2) = bias_factors(h, step);
    num.zip_map_unchecked(v, |m, v| (c1 * m) / (c2 * v + h.epsilon).sqrt())
}

/// One Adam step on a single matrix. `step` is 1-based.
pub fn adam_step(w: &mut Matrix, g: &Matrix, slot: &mut MomentState, h: &AdamHyper, step: u64) -> Result<()> {
    check_step_inputs(w, g, slot, step)?;
    slot.m = ema(&slot.m, g, h.beta1);
    slot.v = ema(&slot.v, &g.hadamard(g)?, h.beta2);
    let dir = scaled_direction(&slot.m, &slot.v, h, step);
    apply_update(w, &dir, h.eta, h.weight_decay);
    Ok(())
}

/// One step of Adam with basis rotation. The slot must carry a basis.
pub fn rotated_adam_step(
    w: &mut Matrix,
    g: &Matrix,
    slot: &mut MomentState,
    h: &AdamHyper,
    est: &EstimationConfig,
    step: u64,
) -> Result<()> {
    check_step_inputs(w, g, slot, step)?;
    let basis = slot
        .basis
        .as_mut()
        .ok_or_else(|| Error::InvalidData("rotated step without a basis".into()))?;
    slot.m = ema(&slot.m, g, h.beta1);
    accumulate_statistics(basis, g, est)?;
    if est.is_refresh_step(step) {
        refresh_basis(basis, &slot.m, est)?;
    }
    let gt = basis.rotate(g)?;
    let mt = basis.rotate(&slot.m)?;
    slot.v = ema(&slot.v, &gt.hadamard(&gt)?, h.beta2);
    let dir = basis.unrotate(&scaled_direction(&mt, &slot.v, h, step))?;
    apply_update(w, &dir, h.eta, h.weight_decay);
    Ok(())
}

/// AdaSGD on one matrix given the already-updated global scalar `vbar`.
pub fn adasgd_step(w: &mut Matrix, g: &Matrix, slot: &mut MomentState, vbar: f64, h: &AdamHyper, step: u64) -> Result<()> {
    check_step_inputs(w, g, slot, step)?;
    slot.m = ema(&slot.m, g, h.beta1);
    let (c1, c2) = bias_factors(h, step);
    let denom = (c2 * vbar + h.epsilon).sqrt();
    let dir = slot.m.map(|m| c1 * m / denom);
    apply_update(w, &dir, h.eta, h.weight_decay);
    Ok(())
}

/// `β v̄ + (1 − β) mean(g ⊙ g)` with the mean taken over every entry of every matrix.
pub fn adasgd_second_moment(vbar: f64, grads: &[Matrix], beta2: f64) -> f64 {
    let count: usize = grads.iter().map(|g| g.rows() * g.cols()).sum();
    let sq: f64 = grads.iter().map(Matrix::sum_squares).sum();
    beta2 * vbar + (1.0 - beta2) * sq / count.max(1) as f64
}

/// Adam with the look-ahead numerator `β₁M' + (1 − β₁)g`.
pub fn nesterov_adam_step(w: &mut Matrix, g: &Matrix, slot: &mut MomentState, h: &AdamHyper, step: u64) -> Result<()> {
    check_step_inputs(w, g, slot, step)?;
    slot.m = ema(&slot.m, g, h.beta1);
    slot.v = ema(&slot.v, &g.hadamard(g)?, h.beta2);
    let num = ema(&slot.m, g, h.beta1);
    let dir = scaled_direction(&num, &slot.v, h, step);
    apply_update(w, &dir, h.eta, h.weight_decay);
    Ok(())
}

/// `base_eta / (1 + delay)^exponent`.
pub fn pipedream_lr_scale(stage_delay: u64, base_eta: f64, exponent: f64) -> f64 {
    base_eta / (1.0 + stage_delay as f64).powf(exponent)
}

/// `g + λ g ⊙ g ⊙ (w_now − w_stale)`.
pub fn delay_compensated_gradient(g_stale: &Matrix, w_now: &Matrix, w_stale: &Matrix, lambda: f64) -> Result<Matrix> {
    g_stale.expect_same_shape("delay_compensated_gradient", w_now)?;
    g_stale.expect_same_shape("delay_compensated_gradient", w_stale)?;
    let shift = w_now.sub(w_stale)?;
    let sq = g_stale.hadamard(g_stale)?;
    g_stale.add(&sq.hadamard(&shift)?.scale(lambda))
}

/// Scales every gradient by `clip / ‖g‖` when the global norm exceeds `clip`.
pub fn clip_global_norm(grads: &mut [Matrix], clip: f64) -> f64 {
    let norm = grads.iter().map(Matrix::sum_squares).sum::<f64>().sqrt();
    if norm > clip {
        let s = clip / norm;
        for g in grads.iter_mut() {
            *g = g.scale(s);
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    RotatedAdam,
    #[serde(rename = "adasgd")]
    AdaSgd,
    NesterovAdam,
    #[serde(rename = "pipedream_lr")]
    PipeDreamLr,
    DelayCompensation,
}

/// Optimizer choice plus everything it needs. Unknown keys are rejected by
/// the flattened [`AdamHyper`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub name: OptimizerKind,
    #[serde(flatten)]
    pub hyper: AdamHyper,
    /// PipeDream-LR: `η / (1 + τ)^exponent`.
    #[serde(default = "d_lr_exponent")]
    pub lr_delay_exponent: f64,
    /// Delay compensation strength.
    #[serde(default = "d_dc_lambda")]
    pub dc_lambda: f64,
    /// Parameter indices left unrotated by rotated Adam (plain Adam instead).
    #[serde(default)]
    pub exclude: Vec<usize>,
}

fn d_lr_exponent() -> f64 {
    1.0
}
fn d_dc_lambda() -> f64 {
    0.1
}

impl OptimizerConfig {
    pub fn new(name: OptimizerKind, hyper: AdamHyper) -> Self {
        Self {
            name,
            hyper,
            lr_delay_exponent: d_lr_exponent(),
            dc_lambda: d_dc_lambda(),
            exclude: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if !(self.lr_delay_exponent >= 0.0) {
            return Err(Error::config("optimizer.lr_delay_exponent", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.dc_lambda) {
            return Err(Error::config("optimizer.dc_lambda", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// A configured optimizer with its state.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    config: OptimizerConfig,
    estimation: Option<EstimationConfig>,
    state: OptimizerState,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, estimation: Option<EstimationConfig>, shapes: &[(usize, usize)]) -> Result<Self> {
        config.validate()?;
        let mut state = OptimizerState::new(shapes);
        if config.name == OptimizerKind::RotatedAdam {
            let est = estimation
                .ok_or_else(|| Error::config("estimation", "required by rotated_adam"))?;
            est.validate()?;
            for (i, slot) in state.slots.iter_mut().enumerate() {
                if !config.exclude.contains(&i) {
                    let (r, c) = slot.m.shape();
                    slot.basis = Some(init_basis(r, c, &est));
                }
            }
        }
        Ok(Self {
            config,
            estimation,
            state,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut OptimizerState {
        &mut self.state
    }

    pub fn kind(&self) -> OptimizerKind {
        self.config.name
    }

    /// Clips (globally) and applies one step. `delays[i]` is the staleness of
    /// `grads[i]`, used only by PipeDream-LR. Returns the pre-clip gradient norm.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix], delays: &[u64]) -> Result<f64> {
        let n = self.state.slots.len();
        if params.len() != n || grads.len() != n {
            return Err(Error::ShapeMismatch {
                op: "Optimizer::step",
                left: (n, 1),
                right: (params.len().min(grads.len()), 1),
            });
        }
        let step = self.state.step_count + 1;
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { step });
        }
        let mut grads = grads.to_vec();
        let norm = match self.config.hyper.grad_clip {
            Some(c) => clip_global_norm(&mut grads, c),
            None => grads.iter().map(Matrix::sum_squares).sum::<f64>().sqrt(),
        };
        let h = self.config.hyper;
        if self.config.name == OptimizerKind::AdaSgd {
            self.state.vbar = adasgd_second_moment(self.state.vbar, &grads, h.beta2);
        }
        let vbar = self.state.vbar;
        for (i, ((w, g), slot)) in params.iter_mut().zip(&grads).zip(&mut self.state.slots).enumerate() {
            match self.config.name {
                OptimizerKind::Adam | OptimizerKind::DelayCompensation => adam_step(w, g, slot, &h, step)?,
                OptimizerKind::RotatedAdam => match (&self.estimation, slot.basis.is_some()) {
                    (Some(est), true) => rotated_adam_step(w, g, slot, &h, est, step)?,
                    _ => adam_step(w, g, slot, &h, step)?,
                },
                OptimizerKind::AdaSgd => adasgd_step(w, g, slot, vbar, &h, step)?,
                OptimizerKind::NesterovAdam => nesterov_adam_step(w, g, slot, &h, step)?,
                OptimizerKind::PipeDreamLr => {
                    let delay = delays.get(i).copied().unwrap_or(0);
                    let scaled = AdamHyper {
                        eta: pipedream_lr_scale(delay, h.eta, self.config.lr_delay_exponent),
                        ..h
                    };
                    adam_step(w, g, slot, &scaled, step)?
                }
            }
        }
        self.state.step_count = step;
        Ok(norm)
    }

    /// The current normalized update direction of parameter `i` (before the
    /// learning rate), as used by weight prediction.
    pub fn direction(&self, i: usize) -> Result<Matrix> {
        let slot = self
            .state
            .slots
            .get(i)
            .ok_or_else(|| Error::InvalidData(format!("no parameter {i}")))?;
        let h = &self.config.hyper;
        let step = self.state.step_count.max(1);
        match (self.config.name, &slot.basis) {
            (OptimizerKind::AdaSgd, _) => {
                let (c1, c2) = bias_factors(h, step);
                let denom = (c2 * self.state.vbar + h.epsilon).sqrt();
                Ok(slot.m.map(|m| c1 * m / denom))
            }
            (OptimizerKind::RotatedAdam, Some(b)) => {
                let mt = b.rotate(&slot.m)?;
                b.unrotate(&scaled_direction(&mt, &slot.v, h, step))
            }
            _ => Ok(scaled_direction(&slot.m, &slot.v, h, step)),
        }
    }
}
