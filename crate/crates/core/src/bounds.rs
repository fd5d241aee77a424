//! Lipschitz bounds on an experimental function.
//!
//! Two families are supported:
//!
//! * the lumped bound `f(a) ± κ‖b − a‖₂`, valid over the whole experimental space;
//! * the directional bound, which uses per-coordinate derivative ranges
//!   `[κ̲_i, κ̄_i]` over a box and, on coordinates where the function is known to
//!   be convex (lower bound) or concave (upper bound), bounds on the derivative at
//!   the anchor point `a` instead:
//!
//! ```text
//! f(b) ≤ f(a) + Σ_{i∈ccv} max(∇̲_i Δ_i, ∇̄_i Δ_i) + Σ_{i∉ccv} max(κ̲_i Δ_i, κ̄_i Δ_i)
//! f(b) ≥ f(a) + Σ_{i∈cvx} min(∇̲_i Δ_i, ∇̄_i Δ_i) + Σ_{i∉cvx} min(κ̲_i Δ_i, κ̄_i Δ_i)
//! ```
//!
//! with `Δ = b − a`. Both points must lie in the box the constants hold on.
//!
//! Everything here is a pure function of its inputs.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_dim, norm2, BoxDomain, Point};

/// Tolerance for the derivative-bound chain `κ̲_i ≤ ∇̲_i ≤ ∇̄_i ≤ κ̄_i`.
const CHAIN_TOL: f64 = 1e-12;

/// Which side of the function a bound applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

/// Scalar Lipschitz constant `κ ≥ 0` for the Euclidean norm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct LumpedConstant(f64);

impl LumpedConstant {
    pub fn new(kappa: f64) -> Result<Self> {
        if !kappa.is_finite() {
            return Err(Error::NonFinite("lumped constant"));
        }
        if kappa < 0.0 {
            return Err(Error::InvalidConstant(format!(
                "lumped constant must be nonnegative, got {kappa}"
            )));
        }
        Ok(LumpedConstant(kappa))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for LumpedConstant {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        LumpedConstant::new(v)
    }
}

impl From<LumpedConstant> for f64 {
    fn from(k: LumpedConstant) -> f64 {
        k.0
    }
}

/// Lower and upper bounds on each partial derivative over `domain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalConstants {
    lower: Vec<f64>,
    upper: Vec<f64>,
    domain: BoxDomain,
}

impl DirectionalConstants {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, domain: BoxDomain) -> Result<Self> {
        let d = DirectionalConstants {
            lower,
            upper,
            domain,
        };
        d.validate()?;
        Ok(d)
    }

    /// `[-c_i, c_i]` on every coordinate.
    pub fn symmetric(magnitudes: &[f64], domain: BoxDomain) -> Result<Self> {
        Self::new(
            magnitudes.iter().map(|c| -c.abs()).collect(),
            magnitudes.iter().map(|c| c.abs()).collect(),
            domain,
        )
    }

    fn validate(&self) -> Result<()> {
        check_dim(self.domain.dim(), self.lower.len())?;
        check_dim(self.domain.dim(), self.upper.len())?;
        if self.lower.iter().chain(&self.upper).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("directional constants"));
        }
        if let Some(i) = self
            .lower
            .iter()
            .zip(&self.upper)
            .position(|(l, u)| l > u)
        {
            return Err(Error::InvalidConstant(format!(
                "directional lower constant exceeds upper constant in dimension {i}"
            )));
        }
        Ok(())
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Same constants, asserted over a different box. The caller vouches for validity there.
    pub fn with_domain(&self, domain: BoxDomain) -> Result<Self> {
        Self::new(self.lower.clone(), self.upper.clone(), domain)
    }

    pub(crate) fn lower_mut(&mut self) -> &mut [f64] {
        &mut self.lower
    }

    pub(crate) fn upper_mut(&mut self) -> &mut [f64] {
        &mut self.upper
    }
}

/// Coordinates in which the function is known to be convex or concave over `domain`.
/// Indices are zero-based. A coordinate may appear in both sets (affine in it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureInfo {
    convex_dims: BTreeSet<usize>,
    concave_dims: BTreeSet<usize>,
    domain: BoxDomain,
}

impl CurvatureInfo {
    pub fn new(
        convex_dims: impl IntoIterator<Item = usize>,
        concave_dims: impl IntoIterator<Item = usize>,
        domain: BoxDomain,
    ) -> Result<Self> {
        let c = CurvatureInfo {
            convex_dims: convex_dims.into_iter().collect(),
            concave_dims: concave_dims.into_iter().collect(),
            domain,
        };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        let n = self.domain.dim();
        if let Some(&i) = self
            .convex_dims
            .iter()
            .chain(&self.concave_dims)
            .find(|&&i| i >= n)
        {
            return Err(Error::InvalidConstant(format!(
                "curvature index {i} out of range for dimension {n}"
            )));
        }
        Ok(())
    }

    pub fn convex_dims(&self) -> &BTreeSet<usize> {
        &self.convex_dims
    }

    pub fn concave_dims(&self) -> &BTreeSet<usize> {
        &self.concave_dims
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn dims_for(&self, side: Side) -> &BTreeSet<usize> {
        match side {
            Side::Upper => &self.concave_dims,
            Side::Lower => &self.convex_dims,
        }
    }
}

/// Bounds on the gradient at a single point `at`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBounds {
    at: Point,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DerivativeBounds {
    pub fn new(at: Point, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let d = DerivativeBounds { at, lower, upper };
        d.validate()?;
        Ok(d)
    }

    /// Zero-width bounds around a known gradient.
    pub fn exact(at: Point, gradient: Vec<f64>) -> Result<Self> {
        Self::new(at, gradient.clone(), gradient)
    }

    fn validate(&self) -> Result<()> {
        check_dim(self.at.dim(), self.lower.len())?;
        check_dim(self.at.dim(), self.upper.len())?;
        if self.lower.iter().chain(&self.upper).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("derivative bounds"));
        }
        if let Some(i) = self
            .lower
            .iter()
            .zip(&self.upper)
            .position(|(l, u)| l > u)
        {
            return Err(Error::InvalidConstant(format!(
                "derivative lower bound exceeds upper bound in dimension {i}"
            )));
        }
        Ok(())
    }

    pub fn at(&self) -> &Point {
        &self.at
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
}

/// Everything known about the Lipschitz behaviour of one experimental function.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct LipschitzSpec {
    pub lumped: Option<LumpedConstant>,
    pub directional: Option<DirectionalConstants>,
    pub curvature: Option<CurvatureInfo>,
    pub deriv_bounds: Option<DerivativeBounds>,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lumped: Option<LumpedConstant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    directional: Option<DirectionalConstants>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    curvature: Option<CurvatureInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    deriv_bounds: Option<DerivativeBounds>,
}

impl TryFrom<RawSpec> for LipschitzSpec {
    type Error = Error;
    fn try_from(r: RawSpec) -> Result<Self> {
        let s = LipschitzSpec {
            lumped: r.lumped,
            directional: r.directional,
            curvature: r.curvature,
            deriv_bounds: r.deriv_bounds,
        };
        s.validate()?;
        Ok(s)
    }
}

impl From<LipschitzSpec> for RawSpec {
    fn from(s: LipschitzSpec) -> Self {
        RawSpec {
            lumped: s.lumped,
            directional: s.directional,
            curvature: s.curvature,
            deriv_bounds: s.deriv_bounds,
        }
    }
}

impl LipschitzSpec {
    pub fn lumped(kappa: f64) -> Result<Self> {
        Ok(LipschitzSpec {
            lumped: Some(LumpedConstant::new(kappa)?),
            ..Default::default()
        })
    }

    pub fn directional(constants: DirectionalConstants) -> Self {
        LipschitzSpec {
            directional: Some(constants),
            ..Default::default()
        }
    }

    pub fn with_lumped(mut self, kappa: LumpedConstant) -> Self {
        self.lumped = Some(kappa);
        self
    }

    pub fn with_curvature(mut self, curvature: CurvatureInfo) -> Result<Self> {
        self.curvature = Some(curvature);
        self.validate()?;
        Ok(self)
    }

    pub fn with_derivative_bounds(mut self, bounds: DerivativeBounds) -> Result<Self> {
        self.deriv_bounds = Some(bounds);
        self.validate()?;
        Ok(self)
    }

    pub fn without_derivative_bounds(&self) -> Self {
        LipschitzSpec {
            deriv_bounds: None,
            ..self.clone()
        }
    }

    /// Keeps only the lumped constant, if any.
    pub fn lumped_only(&self) -> Option<Self> {
        self.lumped.map(|k| LipschitzSpec {
            lumped: Some(k),
            ..Default::default()
        })
    }

    /// Drops curvature and derivative information, keeping the plain constants.
    pub fn plain(&self) -> Self {
        LipschitzSpec {
            lumped: self.lumped,
            directional: self.directional.clone(),
            curvature: None,
            deriv_bounds: None,
        }
    }

    pub fn dim(&self) -> Option<usize> {
        self.directional
            .as_ref()
            .map(|d| d.dim())
            .or_else(|| self.deriv_bounds.as_ref().map(|d| d.at.dim()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.lumped.is_none() && self.directional.is_none() {
            return Err(Error::MissingInformation(
                "a lumped or directional constant is required",
            ));
        }
        if let Some(k) = self.lumped {
            LumpedConstant::new(k.0)?;
        }
        if let Some(d) = &self.directional {
            d.validate()?;
        }
        if let Some(c) = &self.curvature {
            c.validate()?;
            let dir = self.directional.as_ref().ok_or(Error::MissingInformation(
                "curvature information needs directional constants",
            ))?;
            check_dim(dir.dim(), c.domain.dim())?;
        }
        if let Some(db) = &self.deriv_bounds {
            db.validate()?;
            let dir = self.directional.as_ref().ok_or(Error::MissingInformation(
                "derivative bounds need directional constants",
            ))?;
            if self.curvature.is_none() {
                return Err(Error::MissingInformation(
                    "derivative bounds need curvature information",
                ));
            }
            check_dim(dir.dim(), db.at.dim())?;
            if dir.domain.contains(&db.at) {
                for i in 0..dir.dim() {
                    if dir.lower[i] > db.lower[i] + CHAIN_TOL
                        || db.upper[i] > dir.upper[i] + CHAIN_TOL
                    {
                        return Err(Error::InvalidConstant(format!(
                            "derivative bounds in dimension {i} fall outside the directional constants"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Increment `Δ` such that `f(b) ≤ f(a) + Δ` (upper) or `f(b) ≥ f(a) + Δ` (lower).
    ///
    /// Uses the directional form whenever directional constants are present and
    /// both points lie in their box; otherwise the lumped form.
    pub fn increment(&self, a: &Point, b: &Point, side: Side) -> Result<f64> {
        check_dim(a.dim(), b.dim())?;
        if let Some(dir) = &self.directional {
            check_dim(dir.dim(), a.dim())?;
            if dir.domain.contains(a) && dir.domain.contains(b) {
                return directional_increment(a, b, self, side);
            }
        }
        match self.lumped {
            Some(k) => {
                let r = k.0 * a.distance(b)?;
                Ok(match side {
                    Side::Upper => r,
                    Side::Lower => -r,
                })
            }
            None if self.directional.is_some() => Err(Error::OutsideDomain),
            None => Err(Error::MissingInformation("no usable Lipschitz constant")),
        }
    }

    pub fn upper_increment(&self, a: &Point, b: &Point) -> Result<f64> {
        self.increment(a, b, Side::Upper)
    }

    pub fn lower_increment(&self, a: &Point, b: &Point) -> Result<f64> {
        self.increment(a, b, Side::Lower)
    }

    /// A lumped constant valid wherever this spec is: the stored one, else the
    /// one implied by the directional constants.
    pub fn effective_lumped(&self) -> Result<LumpedConstant> {
        match self.lumped {
            Some(k) => Ok(k),
            None => lumped_from_directional(&self.plain()),
        }
    }
}

fn check_finite(vals: &[f64], what: &'static str) -> Result<()> {
    if vals.iter().any(|v| !v.is_finite()) {
        Err(Error::NonFinite(what))
    } else {
        Ok(())
    }
}

/// Two-sided lumped bound `(f(a) − κ‖b−a‖₂, f(a) + κ‖b−a‖₂)`.
pub fn lumped_bounds(f_at_a: f64, a: &Point, b: &Point, kappa: LumpedConstant) -> Result<(f64, f64)> {
    check_finite(&[f_at_a], "function value")?;
    check_finite(a.coords(), "point a")?;
    check_finite(b.coords(), "point b")?;
    let r = kappa.value() * a.distance(b)?;
    Ok((f_at_a - r, f_at_a + r))
}

/// Curvature coordinates usable for `side` at anchor `a`, and the derivative bounds to use there.
fn curvature_terms<'s>(
    spec: &'s LipschitzSpec,
    a: &Point,
    b: &Point,
    side: Side,
) -> Option<(&'s BTreeSet<usize>, &'s DerivativeBounds)> {
    let curv = spec.curvature.as_ref()?;
    let db = spec.deriv_bounds.as_ref()?;
    // Derivative bounds are only meaningful at their own anchor point, and the
    // curvature property only over its own box.
    if db.at != *a || !curv.domain.contains(a) || !curv.domain.contains(b) {
        return None;
    }
    Some((curv.dims_for(side), db))
}

fn directional_increment(a: &Point, b: &Point, spec: &LipschitzSpec, side: Side) -> Result<f64> {
    let dir = spec
        .directional
        .as_ref()
        .ok_or(Error::MissingInformation("directional constants"))?;
    check_dim(dir.dim(), a.dim())?;
    check_dim(dir.dim(), b.dim())?;
    if !dir.domain.contains(a) || !dir.domain.contains(b) {
        return Err(Error::OutsideDomain);
    }
    let curv = curvature_terms(spec, a, b, side);
    let pick = |x: f64, y: f64| match side {
        Side::Upper => x.max(y),
        Side::Lower => x.min(y),
    };
    let mut total = 0.0;
    for i in 0..dir.dim() {
        let delta = b[i] - a[i];
        let (lo, hi) = match curv {
            Some((dims, db)) if dims.contains(&i) => (db.lower[i], db.upper[i]),
            _ => (dir.lower[i], dir.upper[i]),
        };
        total += pick(lo * delta, hi * delta);
    }
    Ok(total)
}

/// Directional upper bound on `f(b)` given `f(a)`.
///
/// Concave coordinates use the derivative bounds at `a` when `spec.deriv_bounds`
/// is anchored at `a`; any coordinate lacking that information falls back to the
/// directional constants, which is always valid.
pub fn directional_upper_bound(f_at_a: f64, a: &Point, b: &Point, spec: &LipschitzSpec) -> Result<f64> {
    check_finite(&[f_at_a], "function value")?;
    Ok(f_at_a + directional_increment(a, b, spec, Side::Upper)?)
}

/// Directional lower bound on `f(b)` given `f(a)`; convex coordinates play the
/// role concave ones play in [`directional_upper_bound`].
pub fn directional_lower_bound(f_at_a: f64, a: &Point, b: &Point, spec: &LipschitzSpec) -> Result<f64> {
    check_finite(&[f_at_a], "function value")?;
    Ok(f_at_a + directional_increment(a, b, spec, Side::Lower)?)
}

/// Vector of greatest absolute per-coordinate sensitivities, `κ̃`.
///
/// On concave (upper side) or convex (lower side) coordinates with derivative
/// bounds available this is `max(|∇̲_i|, |∇̄_i|)`; elsewhere `max(|κ̲_i|, |κ̄_i|)`.
pub fn mixed_kappa(spec: &LipschitzSpec, side: Side) -> Result<Vec<f64>> {
    let dir = spec
        .directional
        .as_ref()
        .ok_or(Error::MissingInformation("directional constants"))?;
    let curv_dims = match (&spec.curvature, &spec.deriv_bounds) {
        (Some(c), Some(db)) => Some((c.dims_for(side), db)),
        _ => None,
    };
    Ok((0..dir.dim())
        .map(|i| match curv_dims {
            Some((dims, db)) if dims.contains(&i) => db.lower[i].abs().max(db.upper[i].abs()),
            _ => dir.lower[i].abs().max(dir.upper[i].abs()),
        })
        .collect())
}

/// `κ = max(‖κ̃_lower‖₂, ‖κ̃_upper‖₂)`.
pub fn lumped_from_directional(spec: &LipschitzSpec) -> Result<LumpedConstant> {
    let up = norm2(&mixed_kappa(spec, Side::Upper)?);
    let lo = norm2(&mixed_kappa(spec, Side::Lower)?);
    LumpedConstant::new(up.max(lo))
}

/// Sufficient condition `‖κ̃‖₂ ≤ κ` for the directional bound on `side` to be at
/// least as tight as the lumped bound with `kappa`.
pub fn is_directional_tighter(spec: &LipschitzSpec, kappa: LumpedConstant, side: Side) -> Result<bool> {
    Ok(norm2(&mixed_kappa(spec, side)?) <= kappa.value())
}
