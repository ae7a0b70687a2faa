//! Oracle suite and experiment drivers behind `rotlab verify` and the
//! acceptance tests.

pub mod invariants;
pub mod oracles;
pub mod phenomena;

use std::fmt;

use crate::error::Result;

/// Outcome of one oracle check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn below(name: &'static str, value: f64, bound: f64) -> Check {
    Check {
        name,
        passed: value < bound,
        detail: format!("{value:.3e} < {bound:.0e}"),
    }
}

fn check(name: &'static str, f: impl FnOnce() -> Result<Vec<Check>>) -> Vec<Check> {
    f().unwrap_or_else(|e| {
        vec![Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        }]
    })
}

/// Number of random Kronecker Hessians in the norm-ordering checks.
pub const ORDERING_CASES: usize = 200;
pub const EQUIVARIANCE_STEPS: usize = 1000;

/// Runs every oracle check.
pub fn run_suite() -> Vec<Check> {
    use oracles::*;
    let mut out = Vec::new();
    out.extend(check("matmul", || Ok(vec![below("matmul", matmul_error(50)?, 1e-12)])));
    out.extend(check("qr", || {
        let (recon, ortho) = qr_error(50)?;
        Ok(vec![below("qr_reconstruction", recon, 1e-10), below("qr_orthonormality", ortho, 1e-10)])
    }));
    out.extend(check("jacobi", || {
        let (recon, ortho) = jacobi_error()?;
        Ok(vec![below("jacobi_reconstruction", recon, 1e-10), below("jacobi_orthonormality", ortho, 1e-10)])
    }));
    out.extend(check("power_iteration", || {
        let (general, r45) = power_iteration_error(100, 50)?;
        Ok(vec![below("power_iteration_100", general, 1e-6), below("power_iteration_r45_50", r45, 1e-8)])
    }));
    out.extend(check("kronecker", || {
        Ok(vec![
            below("kronecker_identities", kronecker_identities(50)?, 1e-12),
            below("kronecker_spectrum", kronecker_spectrum_error(30)?, 1e-9),
        ])
    }));
    out.extend(check("norm_ordering", || {
        let k = kronecker_ordering(ORDERING_CASES)?;
        let r = rank_one_ordering(ORDERING_CASES)?;
        Ok(vec![
            Check {
                name: "norm_ordering_kronecker",
                passed: k.max_violation <= 1e-9 && k.max_closed_form_error <= 1e-9,
                detail: format!(
                    "{} cases, violation {:.3e}, closed form {:.3e}",
                    k.cases, k.max_violation, k.max_closed_form_error
                ),
            },
            Check {
                name: "norm_ordering_rank_one",
                passed: r.max_violation <= 1e-9 && r.max_closed_form_error <= 1e-9,
                detail: format!(
                    "{} cases, violation {:.3e}, closed form {:.3e}",
                    r.cases, r.max_violation, r.max_closed_form_error
                ),
            },
            below("rotation_minimum", rotation_minimum_excess(30)?.max(0.0), 1e-9),
        ])
    }));
    out.extend(check("equivariance", || {
        let e = equivariance(EQUIVARIANCE_STEPS)?;
        Ok(vec![
            below("equivariance_fixed_basis", e.max_deviation, 1e-10),
            Check {
                name: "equivariance_identity_basis",
                passed: e.identity_bit_identical,
                detail: format!("bit-identical over {} steps: {}", e.steps, e.identity_bit_identical),
            },
        ])
    }));
    out.extend(check("finite_differences", || {
        let g = finite_difference_errors()?;
        Ok(vec![
            below("fd_quadratic", g.quadratic, 1e-6),
            below("fd_quadratic_hessian", g.quadratic_hessian, 1e-4),
            below("fd_spiral", g.spiral, 1e-5),
            below("fd_mlp", g.mlp, 1e-4),
        ])
    }));
    out.extend(check("stash_replay", || Ok(vec![below("stash_replay", stash_replay_error(60)?, 1e-12)])));
    out.extend(check("determinism", || {
        let same = determinism()?;
        Ok(vec![Check {
            name: "determinism",
            passed: same,
            detail: format!("double-run artifacts byte-equal: {same}"),
        }])
    }));
    out.extend(check("eigenbasis_convergence", || {
        Ok(vec![below("eigenbasis_convergence", eigenbasis_convergence(60)?, 1e-6)])
    }));
    out.extend(check("stage_table_golden", || {
        let n = stage_table_golden_mismatches()?;
        Ok(vec![Check {
            name: "stage_table_golden",
            passed: n == 0,
            detail: format!("{n} mismatched cells"),
        }])
    }));
    out.extend(invariant_checks());
    out
}

fn flag(name: &'static str, ok: bool, detail: String) -> Check {
    Check {
        name,
        passed: ok,
        detail,
    }
}

fn invariant_checks() -> Vec<Check> {
    use invariants::*;
    let mut out = Vec::new();
    out.extend(check("second_moment_nonnegative", || {
        let v = min_second_moment()?;
        Ok(vec![flag("second_moment_nonnegative", v >= 0.0, format!("min entry {v:.3e}"))])
    }));
    out.extend(check("delay_monotone", || {
        let (ok, iters) = delay_monotone()?;
        Ok(vec![flag("delay_monotone", ok, format!("iterations {iters:?}"))])
    }));
    out.extend(check("zero_delay_bypass", || {
        let ok = zero_delay_bypass()?;
        Ok(vec![flag("zero_delay_bypass", ok, format!("bit-identical for all optimizers: {ok}"))])
    }));
    out.extend(check("prediction_zero_delay", || {
        let ok = prediction_degenerates()?;
        Ok(vec![flag("prediction_zero_delay", ok, format!("matches stashing: {ok}"))])
    }));
    let (snapshots, matrices) = stash_capacity(3, 20);
    out.push(flag(
        "stash_capacity",
        snapshots == 4 && matrices == 8,
        format!("{snapshots} snapshots, {matrices} matrices for tau 3 and two groups"),
    ));
    out.extend(check("stage_count_laws", || {
        let ok = stage_count_laws()?;
        Ok(vec![flag("stage_count_laws", ok, format!("monotone in memory and P*n_max >= L: {ok}"))])
    }));
    out.extend(check("self_slowdown", || {
        let ok = self_slowdown_is_one()?;
        Ok(vec![flag("self_slowdown", ok, format!("ratio(r, r) == 1: {ok}"))])
    }));
    out.extend(check("refresh", || {
        let (ortho, drift) = refresh_laws()?;
        Ok(vec![below("refresh_orthonormality", ortho, 1e-8), below("refresh_fixed_point", drift, 1e-10)])
    }));
    out.extend(check("diagonal_minimum", || {
        let m = diagonal_minimum_margin()?;
        Ok(vec![flag("diagonal_minimum", m >= -1e-12, format!("smallest margin {m:.3e}"))])
    }));
    let excess = spiral_ray_excess();
    out.push(flag("spiral_ray_bound", excess <= 1.0, format!("max (f - r^2) / (A + |c|)^2 = {excess:.6}")));
    out
}
