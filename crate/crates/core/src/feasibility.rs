//! Guards that certify the next experiment and the perturbation ball around it.
//!
//! A guard is the inequality `g_j(u_k) + inc_j(u_k → u) ≤ 0`, where `inc_j` is the
//! Lipschitz upper-bound increment of constraint `j`. If it holds and the
//! constants are valid, `g_j(u) ≤ 0`. The back-off variant demands enough slack
//! at `u_k` that every point within distance `δ_e` is feasible.

use serde::{Deserialize, Serialize};

use crate::bounds::{mixed_kappa, LipschitzSpec, Side};
use crate::error::{Error, Result};
use crate::geometry::{check_dim, norm2, BoxDomain, Point};

/// Margins up to this value count as passing, so that boundary steps computed in
/// floating point (e.g. `-0.3 + 3·0.1`) are not rejected by rounding.
pub const GUARD_TOL: f64 = 1e-12;

/// Outcome of a guard check. `margin` is the largest per-constraint slack; a
/// value `≤ 0` means the step passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardDecision {
    pub feasible: bool,
    pub margins: Vec<f64>,
    pub margin: f64,
    pub binding_constraint: Option<usize>,
}

impl GuardDecision {
    fn from_margins(margins: Vec<f64>) -> Self {
        let (binding, margin) = margins
            .iter()
            .copied()
            .enumerate()
            .fold((None, f64::NEG_INFINITY), |(bi, bm), (i, m)| {
                if m > bm {
                    (Some(i), m)
                } else {
                    (bi, bm)
                }
            });
        GuardDecision {
            feasible: margins.iter().all(|&m| m <= GUARD_TOL),
            margin,
            binding_constraint: binding,
            margins,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackoffReport {
    pub per_constraint_backoff: Vec<f64>,
    pub satisfied: Vec<bool>,
}

impl BackoffReport {
    pub fn all_satisfied(&self) -> bool {
        self.satisfied.iter().all(|&s| s)
    }
}

fn check_start(g: &[f64], specs: &[LipschitzSpec]) -> Result<()> {
    check_dim(g.len(), specs.len())?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("constraint values"));
    }
    if let Some((index, &value)) = g.iter().enumerate().find(|(_, &v)| v > 0.0) {
        return Err(Error::InfeasibleStart { index, value });
    }
    Ok(())
}

/// Checks `g_j(u_k) + inc_j(u_k → u_next) ≤ 0` for every constraint.
///
/// The increment is directional when directional constants are present
/// covering both points, lumped otherwise.
pub fn guard_step(
    g_at_k: &[f64],
    u_k: &Point,
    u_next: &Point,
    specs: &[LipschitzSpec],
) -> Result<GuardDecision> {
    check_start(g_at_k, specs)?;
    let margins = g_at_k
        .iter()
        .zip(specs)
        .map(|(g, s)| Ok(g + s.upper_increment(u_k, u_next)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(GuardDecision::from_margins(margins))
}

/// [`guard_step`] with high-probability upper bounds `ḡ` in place of exact values.
pub fn robust_guard_step(
    g_upper_at_k: &[f64],
    u_k: &Point,
    u_next: &Point,
    specs: &[LipschitzSpec],
) -> Result<GuardDecision> {
    guard_step(g_upper_at_k, u_k, u_next, specs)
}

/// Largest `r` with every step of length `≤ r` passing the lumped guard: `min_j −g_j/κ_j`.
///
/// Returns `f64::INFINITY` when every constant is zero.
pub fn max_safe_radius(g_at_k: &[f64], specs: &[LipschitzSpec]) -> Result<f64> {
    check_start(g_at_k, specs)?;
    let mut r = f64::INFINITY;
    for (g, s) in g_at_k.iter().zip(specs) {
        let k = s.effective_lumped()?.value();
        if k > 0.0 {
            r = r.min(-g / k);
        }
    }
    Ok(r)
}

/// Back-off constant `c_j` such that `g_j(center) + δ_e·c_j ≤ 0` makes the whole
/// `δ_e`-ball (within `space`) feasible.
///
/// Uses `‖κ̃‖₂` when directional constants cover the ball, with derivative bounds
/// only if they are anchored at `center`; otherwise the lumped constant.
pub fn backoff_constant(spec: &LipschitzSpec, center: &Point, delta_e: f64, space: &BoxDomain) -> Result<f64> {
    if let Some(dir) = &spec.directional {
        let ball = BoxDomain::around(center, delta_e)?;
        let region = ball.intersect(space);
        let covers = |b: &BoxDomain| region.as_ref().map(|r| b.contains_box(r)).unwrap_or(false);
        if covers(dir.domain()) {
            let anchored = spec.deriv_bounds.as_ref().map(|d| d.at() == center) == Some(true)
                && spec.curvature.as_ref().map(|c| covers(c.domain())) == Some(true);
            let k = if anchored {
                mixed_kappa(spec, Side::Upper)?
            } else {
                mixed_kappa(&spec.without_derivative_bounds(), Side::Upper)?
            };
            return Ok(norm2(&k));
        }
    }
    spec.lumped
        .map(|k| k.value())
        .ok_or(Error::MissingInformation(
            "no constant valid over the perturbation ball",
        ))
}

/// Back-offs `δ_e·c_j` and whether `g_j + δ_e·c_j ≤ 0` holds for each constraint.
pub fn perturbation_backoff(
    g_at_k: &[f64],
    center: &Point,
    specs: &[LipschitzSpec],
    delta_e: f64,
    space: &BoxDomain,
) -> Result<BackoffReport> {
    if !(delta_e.is_finite() && delta_e >= 0.0) {
        return Err(Error::NegativeRadius(delta_e));
    }
    check_dim(g_at_k.len(), specs.len())?;
    if g_at_k.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("constraint values"));
    }
    let mut per = Vec::with_capacity(specs.len());
    let mut sat = Vec::with_capacity(specs.len());
    for (g, s) in g_at_k.iter().zip(specs) {
        let b = delta_e * backoff_constant(s, center, delta_e, space)?;
        per.push(b);
        sat.push(g + b <= GUARD_TOL);
    }
    Ok(BackoffReport {
        per_constraint_backoff: per,
        satisfied: sat,
    })
}

/// [`perturbation_backoff`] with upper bounds `ḡ` in place of exact values.
pub fn robust_perturbation_backoff(
    g_upper_at_k: &[f64],
    center: &Point,
    specs: &[LipschitzSpec],
    delta_e: f64,
    space: &BoxDomain,
) -> Result<BackoffReport> {
    perturbation_backoff(g_upper_at_k, center, specs, delta_e, space)
}
