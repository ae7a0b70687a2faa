use std::fmt::Write as _;

use super::run::{RunRecord, RunSummary};
use super::spiral::{Region, SpiralSweep};
use super::sweep::CellResult;
use crate::eigenbasis::{Geometry, Source};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn opt_u64(x: Option<u64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn trace_csv(record: &RunRecord) -> String {
    let mut out = String::from("step,loss,grad_norm,effective_delay,misalignment_norm\n");
    for r in &record.trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.step,
            fmt_f64(r.loss),
            fmt_f64(r.grad_norm),
            r.effective_delay,
            opt_f64(r.misalignment_norm)
        );
    }
    out
}

pub fn summary_json(summary: &RunSummary) -> String {
    serde_json::to_string_pretty(summary).unwrap_or_default() + "\n"
}

fn source_name(s: Source) -> &'static str {
    match s {
        Source::First => "first",
        Source::Second => "second",
    }
}

fn geometry_name(g: Geometry) -> &'static str {
    match g {
        Geometry::Unilateral => "unilateral",
        Geometry::Bilateral => "bilateral",
    }
}

pub fn grid_csv(cells: &[CellResult]) -> String {
    let mut out = String::from(
        "index,fingerprint,seed,optimizer,source,geometry,dc_lambda,tau,stages,iterations_to_threshold,final_loss,diverged,slowdown_ratio\n",
    );
    for c in cells {
        let optimizer = serde_json::to_value(c.optimizer)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.index,
            c.fingerprint,
            c.seed,
            optimizer,
            c.strategy.map(|s| source_name(s.source)).unwrap_or(""),
            c.strategy.map(|s| geometry_name(s.geometry)).unwrap_or(""),
            fmt_f64(c.dc_lambda),
            c.tau,
            c.stages.map(|p| p.to_string()).unwrap_or_default(),
            opt_u64(c.iterations_to_threshold),
            fmt_f64(c.final_loss),
            c.diverged,
            opt_f64(c.slowdown_ratio),
        );
    }
    out
}

pub fn spiral_csv(sweep: &SpiralSweep) -> String {
    let mut out = String::from("base_step,angle_deg,misalignment,region,iters_no_delay,iters_delay,ratio\n");
    for p in &sweep.probes {
        let region = match p.region {
            Region::Aligned => "aligned",
            Region::Misaligned => "misaligned",
            Region::Between => "between",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.base_step,
            fmt_f64(p.angle_deg),
            fmt_f64(p.misalignment),
            region,
            p.iters_no_delay,
            p.iters_delay,
            fmt_f64(p.ratio)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for &x in &[0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17);
        }
        assert_eq!(fmt_f64(f64::NAN), "NaN");
    }
}
