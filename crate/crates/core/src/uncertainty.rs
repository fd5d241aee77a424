//! Noisy measurements and Lipschitz tightening of their bounding intervals.
//!
//! A measurement `f̂ = f(u) + w` with `w̲ ≤ w ≤ w̄` (with high probability)
//! gives the nominal interval `[f̂ − w̄, f̂ − w̲]` for `f(u)`. Lipschitz bounds
//! let every visited point lend its interval to every other one:
//!
//! ```text
//! f̲_i ← max_j (f̲_j + inc⁻(u_j → u_i)),   f̄_i ← min_j (f̄_j + inc⁺(u_j → u_i))
//! ```
//!
//! which is iterated until nothing moves by more than the tolerance.

use serde::{Deserialize, Serialize};

use crate::bounds::LipschitzSpec;
use crate::error::{Error, Result};
use crate::geometry::Point;

/// Default termination tolerance for [`refine_bounds`].
pub const DEFAULT_TOL: f64 = 1e-6;

/// Hard cap on refinement passes.
pub const MAX_PASSES: usize = 1000;

/// Crossings of refined bounds up to this size are treated as rounding and
/// collapsed to the midpoint instead of being reported as inconsistent.
const CROSSING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementTag {
    MainIterate,
    Probe,
}

impl MeasurementTag {
    pub fn as_str(self) -> &'static str {
        match self {
            MeasurementTag::MainIterate => "main",
            MeasurementTag::Probe => "probe",
        }
    }
}

impl std::str::FromStr for MeasurementTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "main" | "main_iterate" => Ok(MeasurementTag::MainIterate),
            "probe" => Ok(MeasurementTag::Probe),
            other => Err(Error::UnknownId(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub at: Point,
    pub value: f64,
    pub noise_lower: f64,
    pub noise_upper: f64,
    pub tag: MeasurementTag,
    pub index: usize,
}

impl Measurement {
    pub fn new(
        at: Point,
        value: f64,
        noise_lower: f64,
        noise_upper: f64,
        tag: MeasurementTag,
        index: usize,
    ) -> Result<Self> {
        if !value.is_finite() || !noise_lower.is_finite() || !noise_upper.is_finite() {
            return Err(Error::NonFinite("measurement"));
        }
        if noise_lower > noise_upper {
            return Err(Error::Config(format!(
                "noise lower bound {noise_lower} exceeds upper bound {noise_upper}"
            )));
        }
        Ok(Measurement {
            at,
            value,
            noise_lower,
            noise_upper,
            tag,
            index,
        })
    }

    /// A noiseless main-iterate measurement.
    pub fn exact(at: Point, value: f64, index: usize) -> Result<Self> {
        Self::new(at, value, 0.0, 0.0, MeasurementTag::MainIterate, index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedValue {
    pub at: Point,
    pub lower: f64,
    pub upper: f64,
}

impl BoundedValue {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementResult {
    pub bounds: Vec<BoundedValue>,
    pub passes: usize,
    pub max_last_change: f64,
}

impl RefinementResult {
    /// True if the pass cap was reached before the tolerance was met.
    pub fn hit_cap(&self, tol: f64) -> bool {
        self.max_last_change >= tol
    }
}

pub fn nominal_bounds(m: &Measurement) -> BoundedValue {
    BoundedValue {
        at: m.at.clone(),
        lower: m.value - m.noise_upper,
        upper: m.value - m.noise_lower,
    }
}

/// Iterates the Lipschitz propagation map to its fixed point.
///
/// Each pass recomputes every interval from a snapshot of the previous pass,
/// so the result does not depend on the order of `measurements`. Returns
/// [`Error::InconsistentData`] when a lower bound overtakes an upper bound,
/// which means the constants are too small for the data.
pub fn refine_bounds(measurements: &[Measurement], spec: &LipschitzSpec, tol: f64) -> Result<RefinementResult> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Config(format!("refinement tolerance must be positive, got {tol}")));
    }
    let n = measurements.len();
    let mut lo: Vec<f64> = Vec::with_capacity(n);
    let mut hi: Vec<f64> = Vec::with_capacity(n);
    for m in measurements {
        let b = nominal_bounds(m);
        lo.push(b.lower);
        hi.push(b.upper);
    }
    // inc_lo[j][i]: lower increment from u_j to u_i; likewise inc_hi.
    let mut inc_lo = vec![vec![0.0; n]; n];
    let mut inc_hi = vec![vec![0.0; n]; n];
    for j in 0..n {
        for i in 0..n {
            if i != j {
                inc_lo[j][i] = spec.lower_increment(&measurements[j].at, &measurements[i].at)?;
                inc_hi[j][i] = spec.upper_increment(&measurements[j].at, &measurements[i].at)?;
            }
        }
    }

    let mut passes = 0;
    let mut change = f64::INFINITY;
    while passes < MAX_PASSES {
        passes += 1;
        let (prev_lo, prev_hi) = (lo.clone(), hi.clone());
        change = 0.0f64;
        for i in 0..n {
            let mut l = prev_lo[i];
            let mut h = prev_hi[i];
            for j in 0..n {
                if j != i {
                    l = l.max(prev_lo[j] + inc_lo[j][i]);
                    h = h.min(prev_hi[j] + inc_hi[j][i]);
                }
            }
            if l > h {
                if l - h > CROSSING_TOL {
                    return Err(Error::InconsistentData {
                        index: measurements[i].index,
                        lower: l,
                        upper: h,
                    });
                }
                let mid = 0.5 * (l + h);
                l = mid;
                h = mid;
            }
            change = change.max(l - prev_lo[i]).max(prev_hi[i] - h);
            lo[i] = l;
            hi[i] = h;
        }
        if change < tol {
            break;
        }
    }

    let bounds = measurements
        .iter()
        .zip(lo.into_iter().zip(hi))
        .map(|(m, (lower, upper))| BoundedValue {
            at: m.at.clone(),
            lower,
            upper,
        })
        .collect();
    Ok(RefinementResult {
        bounds,
        passes,
        max_last_change: change,
    })
}

/// Clamps the measured value into `b`.
pub fn trim_measurement(m: &Measurement, b: &BoundedValue) -> f64 {
    m.value.max(b.lower).min(b.upper)
}
