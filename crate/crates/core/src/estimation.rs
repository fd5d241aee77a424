//! Setting and repairing Lipschitz constants.
//!
//! Constants can come from sign information about the physics, from a
//! parametric model whose parameters are only known to lie in a box, or from a
//! local least-squares fit to measurements. Whatever their source, they can be
//! checked against measured data and inflated until every pair of
//! measurements is consistent with them.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bounds::{DirectionalConstants, LipschitzSpec, LumpedConstant};
use crate::error::{Error, Result};
use crate::geometry::{check_dim, euclidean, norm2, BoxDomain, Point};
use crate::uncertainty::{nominal_bounds, Measurement};

pub type EvalFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// Relative step for central-difference gradients.
const FD_REL_STEP: f64 = 1e-6;
/// Relative tolerance when checking a supplied gradient against finite differences.
const GRADIENT_CHECK_TOL: f64 = 1e-4;
/// Pairs closer than this are excluded from difference quotients.
const MIN_PAIR_DISTANCE: f64 = 1e-8;
/// Largest number of nodes evaluated in one grid search.
const MAX_GRID_NODES: usize = 250_000;
/// Confidence level for fitted coefficient boxes.
pub const CONFIDENCE_LEVEL: f64 = 0.95;

/// `f(u, θ)` over `domain × param_box`, with a nominal parameter value.
#[derive(Clone)]
pub struct ParametricModel {
    eval: EvalFn,
    gradient: Option<GradFn>,
    domain: BoxDomain,
    param_box: BoxDomain,
    nominal: Vec<f64>,
}

impl fmt::Debug for ParametricModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricModel")
            .field("domain", &self.domain)
            .field("param_box", &self.param_box)
            .field("nominal", &self.nominal)
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

impl ParametricModel {
    /// Builds a model. A supplied gradient is checked against central
    /// differences on a small sample of `(u, θ)` points.
    pub fn new(
        eval: EvalFn,
        gradient: Option<GradFn>,
        domain: BoxDomain,
        param_box: BoxDomain,
        nominal: Vec<f64>,
    ) -> Result<Self> {
        check_dim(param_box.dim(), nominal.len())?;
        let nominal_pt = Point::new(nominal.clone())?;
        if !param_box.contains(&nominal_pt) {
            return Err(Error::Config("nominal parameters lie outside the parameter box".into()));
        }
        let model = ParametricModel {
            eval,
            gradient,
            domain,
            param_box,
            nominal,
        };
        if model.gradient.is_some() {
            model.check_gradient()?;
        }
        Ok(model)
    }

    fn check_gradient(&self) -> Result<()> {
        let grad = self.gradient.as_ref().expect("checked by caller");
        let mut thetas = vec![self.nominal.clone()];
        thetas.push(self.param_box.lower().to_vec());
        thetas.push(self.param_box.upper().to_vec());
        // interior points only, so central differences stay inside the box
        let inner = shrink(&self.domain, 0.1);
        for theta in &thetas {
            for u in inner.grid(3) {
                let g = grad(u.coords(), theta);
                check_dim(self.dim(), g.len())?;
                let fd = self.fd_gradient(u.coords(), theta);
                for (i, (a, b)) in g.iter().zip(&fd).enumerate() {
                    if !a.is_finite() || (a - b).abs() > GRADIENT_CHECK_TOL * b.abs().max(1.0) {
                        return Err(Error::GradientMismatch {
                            at: u.coords().to_vec(),
                            coord: i,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn param_box(&self) -> &BoxDomain {
        &self.param_box
    }

    pub fn nominal(&self) -> &[f64] {
        &self.nominal
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn eval(&self, u: &[f64], theta: &[f64]) -> f64 {
        (self.eval)(u, theta)
    }

    pub fn eval_nominal(&self, u: &[f64]) -> f64 {
        (self.eval)(u, &self.nominal)
    }

    /// Gradient in `u`: analytic if supplied, else central differences.
    pub fn gradient(&self, u: &[f64], theta: &[f64]) -> Vec<f64> {
        match &self.gradient {
            Some(g) => g(u, theta),
            None => self.fd_gradient(u, theta),
        }
    }

    pub fn gradient_nominal(&self, u: &[f64]) -> Vec<f64> {
        self.gradient(u, &self.nominal)
    }

    fn fd_gradient(&self, u: &[f64], theta: &[f64]) -> Vec<f64> {
        let mut x = u.to_vec();
        (0..u.len())
            .map(|i| {
                let h = FD_REL_STEP * u[i].abs().max(1.0);
                x[i] = u[i] + h;
                let fp = (self.eval)(&x, theta);
                x[i] = u[i] - h;
                let fm = (self.eval)(&x, theta);
                x[i] = u[i];
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    /// Same model with a different nominal parameter vector.
    pub fn with_nominal(&self, nominal: Vec<f64>) -> Result<Self> {
        ParametricModel::new(
            self.eval.clone(),
            self.gradient.clone(),
            self.domain.clone(),
            self.param_box.clone(),
            nominal,
        )
    }

    /// Same function over a different parameter box (the nominal must lie in it).
    pub fn with_param_box(&self, param_box: BoxDomain) -> Result<Self> {
        ParametricModel::new(
            self.eval.clone(),
            self.gradient.clone(),
            self.domain.clone(),
            param_box,
            self.nominal.clone(),
        )
    }
}

fn shrink(b: &BoxDomain, frac: f64) -> BoxDomain {
    let lower = b
        .lower()
        .iter()
        .zip(b.widths())
        .map(|(l, w)| l + frac * w)
        .collect();
    let upper = b
        .upper()
        .iter()
        .zip(b.widths())
        .map(|(u, w)| u - frac * w)
        .collect();
    BoxDomain::new(lower, upper).expect("shrunk box stays ordered")
}

/// Knobs for the model-based searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// Grid nodes per (non-degenerate) dimension of `(u, θ)`.
    pub grid_per_dim: usize,
    /// Added to `κ̄_i` and subtracted from `κ̲_i` after the search.
    pub padding: f64,
    /// Number of best grid nodes refined by local search.
    pub local_starts: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            grid_per_dim: 9,
            padding: 0.0,
            local_starts: 4,
        }
    }
}

/// The joint `(u, θ)` search box.
fn joint_box(domain: &BoxDomain, param_box: &BoxDomain) -> BoxDomain {
    let lower = domain.lower().iter().chain(param_box.lower()).copied().collect();
    let upper = domain.upper().iter().chain(param_box.upper()).copied().collect();
    BoxDomain::new(lower, upper).expect("concatenation of valid boxes")
}

/// Grid over `b` with one node on degenerate dimensions and the node count
/// reduced until the total fits in `MAX_GRID_NODES`.
fn search_grid(b: &BoxDomain, per_dim: usize) -> Vec<Vec<f64>> {
    let widths = b.widths();
    let live = widths.iter().filter(|w| **w > 0.0).count() as u32;
    let mut k = per_dim.max(2);
    while k > 2 && k.checked_pow(live).is_none_or(|t| t > MAX_GRID_NODES) {
        k -= 1;
    }
    let axes: Vec<Vec<f64>> = (0..b.dim())
        .map(|i| {
            if widths[i] > 0.0 {
                (0..k)
                    .map(|j| b.lower()[i] + widths[i] * j as f64 / (k - 1) as f64)
                    .collect()
            } else {
                vec![b.lower()[i]]
            }
        })
        .collect();
    let mut out = vec![Vec::with_capacity(b.dim())];
    for axis in &axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &v in axis {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Coordinate pattern search for the maximum of `h` over `b`, starting at `z0`.
fn pattern_search<F: Fn(&[f64]) -> f64>(h: &F, z0: &[f64], b: &BoxDomain, init_frac: f64) -> (Vec<f64>, f64) {
    let widths = b.widths();
    let mut steps: Vec<f64> = widths.iter().map(|w| w * init_frac).collect();
    let floor = 1e-10 * widths.iter().cloned().fold(0.0, f64::max).max(1e-12);
    let mut z = z0.to_vec();
    let mut best = h(&z);
    let mut evals = 0usize;
    while steps.iter().any(|s| *s > floor) && evals < 20_000 {
        let mut improved = false;
        for i in 0..z.len() {
            if steps[i] <= floor {
                continue;
            }
            for dir in [1.0, -1.0] {
                let mut cand = z.clone();
                cand[i] = (z[i] + dir * steps[i]).clamp(b.lower()[i], b.upper()[i]);
                let v = h(&cand);
                evals += 1;
                if v > best {
                    best = v;
                    z = cand;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            for s in &mut steps {
                *s *= 0.5;
            }
        }
    }
    (z, best)
}

/// Maximum of `h` over `b`: grid search followed by local refinement of the best nodes.
fn grid_maximize<F: Fn(&[f64]) -> f64 + Sync>(h: &F, b: &BoxDomain, opts: &EstimateOptions) -> f64 {
    let grid = search_grid(b, opts.grid_per_dim);
    let values: Vec<f64> = grid.par_iter().map(|z| h(z)).collect();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &c| values[c].total_cmp(&values[a]).then(a.cmp(&c)));
    let spacing = 0.5 / (opts.grid_per_dim.max(2) - 1) as f64;
    order
        .iter()
        .take(opts.local_starts.max(1))
        .map(|&i| pattern_search(h, &grid[i], b, spacing).1)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Directional constants `κ̲_i = min ∂f/∂u_i`, `κ̄_i = max ∂f/∂u_i` over `domain × Θ`.
pub fn estimate_directional_from_model(
    model: &ParametricModel,
    domain: &BoxDomain,
    opts: &EstimateOptions,
) -> Result<DirectionalConstants> {
    check_dim(model.dim(), domain.dim())?;
    let n = domain.dim();
    let jb = joint_box(domain, model.param_box());
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for i in 0..n {
        let partial = |z: &[f64]| model.gradient(&z[..n], &z[n..])[i];
        let hi = grid_maximize(&partial, &jb, opts);
        let lo = -grid_maximize(&|z: &[f64]| -partial(z), &jb, opts);
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::NonFinite("model derivative"));
        }
        lower.push(lo - opts.padding);
        upper.push(hi + opts.padding);
    }
    DirectionalConstants::new(lower, upper, domain.clone())
}

/// Lumped constant: the larger of the best pair difference quotient on a grid
/// and the best gradient norm (the limit of quotients over close pairs).
pub fn estimate_lumped_from_model(
    model: &ParametricModel,
    domain: &BoxDomain,
    opts: &EstimateOptions,
) -> Result<LumpedConstant> {
    check_dim(model.dim(), domain.dim())?;
    let n = domain.dim();
    let jb = joint_box(domain, model.param_box());
    let grad_sup = grid_maximize(&|z: &[f64]| norm2(&model.gradient(&z[..n], &z[n..])), &jb, opts);

    let u_nodes = search_grid(domain, opts.grid_per_dim.min(21));
    let u_nodes: Vec<Vec<f64>> = if u_nodes.len() > 2000 {
        search_grid(domain, 3)
    } else {
        u_nodes
    };
    let thetas = search_grid(model.param_box(), opts.grid_per_dim.min(5));
    let pair_sup = thetas
        .par_iter()
        .map(|theta| {
            let f: Vec<f64> = u_nodes.iter().map(|u| model.eval(u, theta)).collect();
            let mut best = 0.0f64;
            for a in 0..u_nodes.len() {
                for b in (a + 1)..u_nodes.len() {
                    let d = euclidean(&u_nodes[a], &u_nodes[b]);
                    if d >= MIN_PAIR_DISTANCE {
                        best = best.max((f[b] - f[a]).abs() / d);
                    }
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    let k = grad_sup.max(pair_sup);
    if !k.is_finite() {
        return Err(Error::NonFinite("model difference quotient"));
    }
    LumpedConstant::new(k + opts.padding)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitForm {
    Linear,
    Quadratic,
}

impl FitForm {
    pub fn n_coefficients(self, n_u: usize) -> usize {
        match self {
            FitForm::Linear => n_u + 1,
            FitForm::Quadratic => (n_u + 1) * (n_u + 2) / 2,
        }
    }
}

fn features(form: FitForm, u: &[f64]) -> Vec<f64> {
    let mut row = Vec::with_capacity(form.n_coefficients(u.len()));
    row.push(1.0);
    row.extend_from_slice(u);
    if form == FitForm::Quadratic {
        for i in 0..u.len() {
            for j in i..u.len() {
                row.push(u[i] * u[j]);
            }
        }
    }
    row
}

fn feature_gradient(form: FitForm, u: &[f64], theta: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut g: Vec<f64> = theta[1..=n].to_vec();
    if form == FitForm::Quadratic {
        let mut k = n + 1;
        for i in 0..n {
            for j in i..n {
                if i == j {
                    g[i] += 2.0 * theta[k] * u[i];
                } else {
                    g[i] += theta[k] * u[j];
                    g[j] += theta[k] * u[i];
                }
                k += 1;
            }
        }
    }
    g
}

/// Least-squares linear or quadratic model of the data.
///
/// Coefficients are ordered constant, linear terms, then `u_i·u_j` for `i ≤ j`.
/// The parameter box holds the coefficient-wise 95% Student-t confidence
/// intervals; with no residual degrees of freedom it has zero width. The model
/// domain is the bounding box of the data.
pub fn fit_local_model(data: &[Measurement], form: FitForm) -> Result<ParametricModel> {
    let first = data.first().ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
    let n_u = first.at.dim();
    let p = form.n_coefficients(n_u);
    if data.len() < p {
        return Err(Error::InsufficientData {
            needed: p,
            got: data.len(),
        });
    }
    let mut x = DMatrix::<f64>::zeros(data.len(), p);
    let mut y = DVector::<f64>::zeros(data.len());
    let mut lower = first.at.coords().to_vec();
    let mut upper = lower.clone();
    for (r, m) in data.iter().enumerate() {
        check_dim(n_u, m.at.dim())?;
        for (c, v) in features(form, m.at.coords()).into_iter().enumerate() {
            x[(r, c)] = v;
        }
        y[r] = m.value;
        for (i, &c) in m.at.coords().iter().enumerate() {
            lower[i] = lower[i].min(c);
            upper[i] = upper[i].max(c);
        }
    }
    let xtx = x.transpose() * &x;
    let svd = xtx.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-12 * smax.max(f64::MIN_POSITIVE) {
        return Err(Error::SingularDesign);
    }
    let xtx_inv = svd
        .pseudo_inverse(0.0)
        .map_err(|_| Error::SingularDesign)?;
    let beta = &xtx_inv * (x.transpose() * &y);
    let resid = &y - &x * &beta;
    let dof = data.len() - p;
    let half_widths: Vec<f64> = if dof == 0 {
        vec![0.0; p]
    } else {
        let s2 = resid.norm_squared() / dof as f64;
        let t = StudentsT::new(0.0, 1.0, dof as f64)
            .map_err(|e| Error::Config(e.to_string()))?
            .inverse_cdf(0.5 + CONFIDENCE_LEVEL / 2.0);
        (0..p).map(|i| t * (s2 * xtx_inv[(i, i)]).max(0.0).sqrt()).collect()
    };
    let coef: Vec<f64> = beta.iter().copied().collect();
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(Error::SingularDesign);
    }
    let param_box = BoxDomain::new(
        coef.iter().zip(&half_widths).map(|(c, h)| c - h).collect(),
        coef.iter().zip(&half_widths).map(|(c, h)| c + h).collect(),
    )?;
    let eval: EvalFn = Arc::new(move |u: &[f64], th: &[f64]| {
        features(form, u).iter().zip(th).map(|(a, b)| a * b).sum()
    });
    let grad: GradFn = Arc::new(move |u: &[f64], th: &[f64]| feature_gradient(form, u, th));
    ParametricModel::new(eval, Some(grad), BoxDomain::new(lower, upper)?, param_box, coef)
}

/// How measured values enter the pairwise check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckMode {
    /// Values are taken as exact.
    Exact,
    /// Nominal interval endpoints are used, so noise alone does not force inflation.
    Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub initial: LipschitzSpec,
    pub repaired: LipschitzSpec,
    /// Distinct unordered pairs inconsistent with the initial constants.
    pub violations_found: usize,
    pub inflation_steps: usize,
    /// Pairs at (numerically) the same point, which no constant can reconcile.
    pub coincident_pairs_skipped: usize,
}

/// `(a, b, checked_directionally)` for each violating pair.
type Violations = Vec<(usize, usize, bool)>;

/// Pairs `(a, b)` violating the Lipschitz inequalities, with whether each was
/// checked through the directional constants, and the number of coincident pairs.
fn violating_pairs(spec: &LipschitzSpec, data: &[Measurement], mode: CheckMode) -> Result<(Violations, usize)> {
    let vals: Vec<(f64, f64)> = data
        .iter()
        .map(|m| match mode {
            CheckMode::Exact => (m.value, m.value),
            CheckMode::Interval => {
                let b = nominal_bounds(m);
                (b.lower, b.upper)
            }
        })
        .collect();
    let mut out = Vec::new();
    let mut coincident = 0;
    for a in 0..data.len() {
        for b in (a + 1)..data.len() {
            let (pa, pb) = (&data[a].at, &data[b].at);
            let d = pa.distance(pb)?;
            let bad = |from: usize, to: usize, pf: &Point, pt: &Point| -> Result<bool> {
                let up = spec.upper_increment(pf, pt)?;
                let lo = spec.lower_increment(pf, pt)?;
                // the interval at `to` must meet the bound propagated from `from`
                Ok(vals[to].0 > vals[from].1 + up || vals[to].1 < vals[from].0 + lo)
            };
            if bad(a, b, pa, pb)? || bad(b, a, pb, pa)? {
                if d < 1e-12 {
                    coincident += 1;
                    continue;
                }
                let directional = spec
                    .directional
                    .as_ref()
                    .map(|dc| dc.domain().contains(pa) && dc.domain().contains(pb))
                    .unwrap_or(false);
                out.push((a, b, directional));
            }
        }
    }
    Ok((out, coincident))
}

fn grow(v: f64, inflation: f64) -> f64 {
    v.abs().max(inflation)
}

/// Inflates the constants until every pair of measurements is consistent with them.
///
/// A lumped constant grows as `κ ← max(2κ, κ + inflation)`. Directional
/// constants widen symmetrically by the same rule on every coordinate along
/// which some violating pair moves; curvature and derivative information is
/// dropped once directional constants are widened.
pub fn consistency_repair(
    spec: &LipschitzSpec,
    data: &[Measurement],
    inflation: f64,
    mode: CheckMode,
) -> Result<ConsistencyReport> {
    if !(inflation.is_finite() && inflation > 0.0) {
        return Err(Error::Config(format!("inflation must be positive, got {inflation}")));
    }
    spec.validate()?;
    let (initial_pairs, coincident) = violating_pairs(spec, data, mode)?;
    let mut cur = spec.clone();
    let mut pairs = initial_pairs.clone();
    let mut steps = 0;
    while !pairs.is_empty() {
        steps += 1;
        if pairs.iter().any(|p| !p.2) {
            let k = cur.lumped.map(|k| k.value()).unwrap_or(0.0);
            cur.lumped = Some(LumpedConstant::new((2.0 * k).max(k + inflation))?);
        }
        if pairs.iter().any(|p| p.2) {
            let mut dir = cur.directional.clone().expect("directional pair implies constants");
            let n = dir.dim();
            let mut moved = vec![false; n];
            for &(a, b, is_dir) in &pairs {
                if is_dir {
                    for (i, m) in moved.iter_mut().enumerate() {
                        *m |= (data[a].at[i] - data[b].at[i]).abs() > 1e-12;
                    }
                }
            }
            for i in (0..n).filter(|&i| moved[i]) {
                let up = dir.upper()[i];
                let lo = dir.lower()[i];
                dir.upper_mut()[i] = up + grow(up, inflation);
                dir.lower_mut()[i] = lo - grow(lo, inflation);
            }
            cur.directional = Some(dir);
            cur.curvature = None;
            cur.deriv_bounds = None;
        }
        pairs = violating_pairs(&cur, data, mode)?.0;
    }
    Ok(ConsistencyReport {
        initial: spec.clone(),
        repaired: cur,
        violations_found: initial_pairs.len(),
        inflation_steps: steps,
        coincident_pairs_skipped: coincident,
    })
}

/// Known sign of a partial derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DerivativeSign {
    Nonneg,
    Nonpos,
    Free,
}

impl std::str::FromStr for DerivativeSign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonneg" => Ok(DerivativeSign::Nonneg),
            "nonpos" => Ok(DerivativeSign::Nonpos),
            "free" => Ok(DerivativeSign::Free),
            other => Err(Error::UnknownId(other.to_string())),
        }
    }
}

/// Directional constants implied by sign and magnitude knowledge. A side is
/// `None` when nothing bounds it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsPreset {
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

impl PhysicsPreset {
    pub fn is_complete(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_some())
    }

    pub fn to_directional(&self, domain: &BoxDomain) -> Result<DirectionalConstants> {
        let take = |v: &[Option<f64>]| -> Result<Vec<f64>> {
            v.iter()
                .map(|x| x.ok_or(Error::MissingInformation("a derivative side has no magnitude bound")))
                .collect()
        };
        DirectionalConstants::new(take(&self.lower)?, take(&self.upper)?, domain.clone())
    }
}

/// `nonneg` fixes `κ̲_i = 0`, `nonpos` fixes `κ̄_i = 0`; a magnitude `c` bounds the
/// remaining side(s) by `±c`.
pub fn preset_from_physics(signs: &[DerivativeSign], magnitudes: &[Option<f64>]) -> Result<PhysicsPreset> {
    check_dim(signs.len(), magnitudes.len())?;
    let mut lower = Vec::with_capacity(signs.len());
    let mut upper = Vec::with_capacity(signs.len());
    for (s, m) in signs.iter().zip(magnitudes) {
        if let Some(c) = m {
            if !c.is_finite() || *c <= 0.0 {
                return Err(Error::InvalidConstant(format!("magnitude must be positive, got {c}")));
            }
        }
        let (l, u) = match s {
            DerivativeSign::Nonneg => (Some(0.0), *m),
            DerivativeSign::Nonpos => (m.map(|c| -c), Some(0.0)),
            DerivativeSign::Free => (m.map(|c| -c), *m),
        };
        lower.push(l);
        upper.push(u);
    }
    Ok(PhysicsPreset { lower, upper })
}
