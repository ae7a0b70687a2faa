//! Per-block memory and minimum pipeline depth for a model/device pair.
//!
//! `M_block = 16W + 34sbh + 5bas²` bytes; a device of `m` bytes holds
//! `n_max = ⌊m / M_block⌋` blocks, so `P = ⌈L / n_max⌉`. When not even one
//! block fits, `P ≥ 2L` is reported as a lower bound.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The stage table inputs shipped with the crate.
pub const STAGE_TABLE_FIXTURE: &str = include_str!("../fixtures/stage_table.toml");
/// Stage table computed from [`STAGE_TABLE_FIXTURE`].
pub const STAGE_TABLE_GOLDEN: &str = include_str!("../fixtures/stage_table_golden.csv");
/// The published stage table, transcribed cell for cell.
pub const STAGE_TABLE_PUBLISHED: &str = include_str!("../fixtures/stage_table_published.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub h: u64,
    pub a: u64,
    pub s: u64,
    pub b: u64,
    pub w: u64,
    pub l: u64,
    /// Device memory in decimal bytes.
    pub m: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRow {
    pub name: String,
    pub h: u64,
    pub a: u64,
    pub s: u64,
    pub b: u64,
    pub w: u64,
    pub l: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Device {
    pub name: String,
    pub memory_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageTableConfig {
    #[serde(default)]
    pub models: Vec<ModelRow>,
    #[serde(default)]
    pub devices: Vec<Device>,
}

impl StageTableConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(crate::harness::config_error)?;
        for (i, m) in cfg.models.iter().enumerate() {
            for (key, v) in [("h", m.h), ("a", m.a), ("s", m.s), ("b", m.b), ("l", m.l)] {
                if v == 0 {
                    return Err(Error::config(format!("models[{i}].{key}"), "must be positive"));
                }
            }
        }
        for (i, d) in cfg.devices.iter().enumerate() {
            if d.memory_bytes == 0 {
                return Err(Error::config(format!("devices[{i}].memory_bytes"), "must be positive"));
            }
        }
        Ok(cfg)
    }
}

impl ModelRow {
    pub fn on(&self, device: &Device) -> PipelineConfig {
        PipelineConfig {
            h: self.h,
            a: self.a,
            s: self.s,
            b: self.b,
            w: self.w,
            l: self.l,
            m: device.memory_bytes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageResult {
    pub p: u64,
    pub n_max: u64,
    pub lower_bound_only: bool,
}

impl std::fmt::Display for StageResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", self.p, if self.lower_bound_only { "*" } else { "" })
    }
}

/// `16W + 34sbh + 5bas²` bytes.
pub fn block_memory(cfg: &PipelineConfig) -> u128 {
    let (h, a, s, b, w) = (cfg.h as u128, cfg.a as u128, cfg.s as u128, cfg.b as u128, cfg.w as u128);
    16 * w + 34 * s * b * h + 5 * b * a * s * s
}

pub fn required_stages(cfg: &PipelineConfig) -> StageResult {
    let block = block_memory(cfg);
    let n_max = (cfg.m as u128).checked_div(block).unwrap_or(u128::from(u64::MAX));
    let n_max = n_max.min(u128::from(u64::MAX)) as u64;
    if n_max == 0 {
        StageResult {
            p: 2 * cfg.l,
            n_max,
            lower_bound_only: true,
        }
    } else {
        StageResult {
            p: cfg.l.div_ceil(n_max),
            n_max,
            lower_bound_only: false,
        }
    }
}

/// CSV with one row per model and one stage-count column per device;
/// lower-bound cells carry a `*` suffix.
pub fn emit_stage_table(rows: &[ModelRow], devices: &[Device]) -> String {
    let mut out = String::from("model,h,a,W,L");
    for d in devices {
        out.push(',');
        out.push_str(&d.name);
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{},{},{}", r.name, r.h, r.a, r.w, r.l);
        for d in devices {
            let _ = write!(out, ",{}", required_stages(&r.on(d)));
        }
        out.push('\n');
    }
    out
}

/// Cells of two stage tables (data rows, device columns) that differ, as
/// `(model, device, left, right)`.
pub fn diff_stage_tables(left: &str, right: &str) -> Vec<(String, String, String, String)> {
    let parse = |t: &str| -> Vec<Vec<String>> {
        t.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split(',').map(str::to_owned).collect())
            .collect()
    };
    let (a, b) = (parse(left), parse(right));
    let header = a.first().cloned().unwrap_or_default();
    let mut diffs = Vec::new();
    let rows = a.len().max(b.len());
    for i in 1..rows {
        let ra = a.get(i).cloned().unwrap_or_default();
        let rb = b.get(i).cloned().unwrap_or_default();
        let cols = ra.len().max(rb.len()).max(header.len());
        for j in 5..cols {
            let (x, y) = (ra.get(j).cloned().unwrap_or_default(), rb.get(j).cloned().unwrap_or_default());
            if x != y {
                let model = ra.first().or(rb.first()).cloned().unwrap_or_default();
                diffs.push((model, header.get(j).cloned().unwrap_or_default(), x, y));
            }
        }
    }
    diffs
}
