//! Decision vectors and axis-aligned boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when testing box membership, so that points produced by
/// clipping or by `lower + (upper - lower) * t` arithmetic are not rejected.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// A decision-variable vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("point coordinates"));
        }
        Ok(Point(coords))
    }

    /// Builds a point without the finiteness check. Callers guarantee finite input.
    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn distance(&self, other: &Point) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(euclidean(&self.0, &other.0))
    }

    /// `other - self`, coordinate-wise.
    pub fn delta_to(&self, other: &Point) -> Result<Vec<f64>> {
        check_dim(self.dim(), other.dim())?;
        Ok(other.0.iter().zip(&self.0).map(|(b, a)| b - a).collect())
    }

    /// Point on the segment from `self` to `other` at fraction `t`.
    pub fn lerp(&self, other: &Point, t: f64) -> Point {
        Point(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + t * (b - a))
                .collect(),
        )
    }
}

impl From<&[f64]> for Point {
    fn from(c: &[f64]) -> Self {
        Point(c.to_vec())
    }
}

impl std::ops::Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        Err(Error::DimensionMismatch { expected, actual })
    } else {
        Ok(())
    }
}

/// Axis-aligned box `{u : lower_i <= u_i <= upper_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawBox> for BoxDomain {
    type Error = Error;
    fn try_from(r: RawBox) -> Result<Self> {
        BoxDomain::new(r.lower, r.upper)
    }
}

impl From<BoxDomain> for RawBox {
    fn from(b: BoxDomain) -> Self {
        RawBox {
            lower: b.lower,
            upper: b.upper,
        }
    }
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.iter().chain(&upper).any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("box bounds"));
        }
        if let Some(i) = lower.iter().zip(&upper).position(|(l, u)| l > u) {
            return Err(Error::InvalidBox(i));
        }
        Ok(BoxDomain { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        BoxDomain {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    /// The smallest box containing both points (`I_{u_a}^{u_b}` in either orientation).
    pub fn spanned(a: &Point, b: &Point) -> Result<Self> {
        check_dim(a.dim(), b.dim())?;
        let lower = a.0.iter().zip(&b.0).map(|(x, y)| x.min(*y)).collect();
        let upper = a.0.iter().zip(&b.0).map(|(x, y)| x.max(*y)).collect();
        Ok(BoxDomain { lower, upper })
    }

    /// `[c - r, c + r]` in every coordinate.
    pub fn around(center: &Point, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::NegativeRadius(radius));
        }
        let lower = center.0.iter().map(|c| c - radius).collect();
        let upper = center.0.iter().map(|c| c + radius).collect();
        Ok(BoxDomain { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.dim() == self.dim()
            && p.0
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *x >= l - MEMBERSHIP_TOL && *x <= u + MEMBERSHIP_TOL)
    }

    /// True when `other` lies inside `self`.
    pub fn contains_box(&self, other: &BoxDomain) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|i| {
                other.lower[i] >= self.lower[i] - MEMBERSHIP_TOL
                    && other.upper[i] <= self.upper[i] + MEMBERSHIP_TOL
            })
    }

    pub fn intersect(&self, other: &BoxDomain) -> Option<BoxDomain> {
        if self.dim() != other.dim() {
            return None;
        }
        let lower: Vec<f64> = self
            .lower
            .iter()
            .zip(&other.lower)
            .map(|(a, b)| a.max(*b))
            .collect();
        let upper: Vec<f64> = self
            .upper
            .iter()
            .zip(&other.upper)
            .map(|(a, b)| a.min(*b))
            .collect();
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            None
        } else {
            Some(BoxDomain { lower, upper })
        }
    }

    pub fn clip(&self, p: &Point) -> Point {
        Point(
            p.0.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .map(|(x, (l, u))| x.clamp(*l, *u))
                .collect(),
        )
    }

    pub(crate) fn clip_in_place(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Point at fractional position `t` (each `t_i` in `[0, 1]`).
    pub fn at_fraction(&self, t: &[f64]) -> Point {
        Point(
            self.lower
                .iter()
                .zip(&self.upper)
                .zip(t)
                .map(|((l, u), s)| l + (u - l) * s)
                .collect(),
        )
    }

    /// Regular grid with `per_dim` nodes along every coordinate (corners included).
    pub fn grid(&self, per_dim: usize) -> Vec<Point> {
        let per_dim = per_dim.max(1);
        let n = self.dim();
        let total = per_dim.pow(n as u32);
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            let t: Vec<f64> = idx
                .iter()
                .map(|&k| {
                    if per_dim == 1 {
                        0.5
                    } else {
                        k as f64 / (per_dim - 1) as f64
                    }
                })
                .collect();
            out.push(self.at_fraction(&t));
            for i in idx.iter_mut() {
                *i += 1;
                if *i < per_dim {
                    break;
                }
                *i = 0;
            }
        }
        out
    }

    pub fn widths(&self) -> Vec<f64> {
        self.upper
            .iter()
            .zip(&self.lower)
            .map(|(u, l)| u - l)
            .collect()
    }
}
