//! Reference optimizers: constraint adaptation, modifier adaptation and a
//! guarded steepest descent, each runnable with or without Lipschitz guards.

pub mod campaign;
pub mod solver;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::LipschitzSpec;
use crate::error::{Error, Result};
use crate::feasibility::{backoff_constant, GuardDecision, GUARD_TOL};
use crate::geometry::{check_dim, BoxDomain, Point};
use crate::plants::Plant;

pub use campaign::{
    compare_trim, convergence_iteration, delta_phi_ave, run_campaign, CampaignLog, ExperimentRecord, PairedResult,
};
pub use solver::{GuardSpec, Solution, Subproblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Constraint adaptation: filtered zero-order bias on the model constraints.
    Ca,
    /// Modifier adaptation: zero- and first-order corrections from probe experiments.
    Ma,
    /// Steepest descent on the model cost, cut short by the guard.
    Gd,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ca" => Ok(Algorithm::Ca),
            "ma" => Ok(Algorithm::Ma),
            "gd" => Ok(Algorithm::Gd),
            _ => Err(Error::UnknownId(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuardMode {
    None,
    Lumped,
    Directional,
}

impl std::str::FromStr for GuardMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(GuardMode::None),
            "lumped" => Ok(GuardMode::Lumped),
            "directional" => Ok(GuardMode::Directional),
            _ => Err(Error::UnknownId(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub algorithm: Algorithm,
    /// `k_f`: the campaign applies iterates `u_0, …, u_{k_f}`.
    pub max_iterations: usize,
    /// Probe distance for modifier adaptation, and the radius of the back-off ball.
    pub delta_e: f64,
    pub guard: GuardMode,
    pub noise: bool,
    pub sigma: f64,
    pub seed: u64,
    /// Filter gain; `None` picks 0.7 for constraint adaptation and 1 for modifier adaptation.
    pub alpha: Option<f64>,
    /// Refine all bounding values with the Lipschitz constants and trim measurements.
    pub trim: bool,
    /// Draw `u_0` uniformly among points meeting the constraints (with back-off).
    pub random_start: bool,
    /// Step size for steepest descent.
    pub eta: f64,
    /// Random starts for the subproblem solver, in addition to `u_k`.
    pub solver_starts: usize,
    /// Overrides for the constraint constants; the plant oracle otherwise.
    pub constraint_specs: Option<Vec<LipschitzSpec>>,
    /// Override for the cost constant used when refining cost bounds.
    pub cost_spec: Option<LipschitzSpec>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            algorithm: Algorithm::Ca,
            max_iterations: 30,
            delta_e: 0.05,
            guard: GuardMode::Lumped,
            noise: false,
            sigma: crate::plants::DEFAULT_SIGMA,
            seed: 0,
            alpha: None,
            trim: false,
            random_start: false,
            eta: 0.1,
            solver_starts: 20,
            constraint_specs: None,
            cost_spec: None,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_e.is_finite() && self.delta_e >= 0.0) {
            return Err(Error::NegativeRadius(self.delta_e));
        }
        if self.algorithm == Algorithm::Ma && self.delta_e == 0.0 {
            return Err(Error::Config("modifier adaptation needs a positive delta_e".into()));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::Config(format!("sigma must be nonnegative, got {}", self.sigma)));
        }
        let a = self.alpha_value();
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1], got {a}")));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        Ok(())
    }

    pub fn alpha_value(&self) -> f64 {
        self.alpha.unwrap_or(match self.algorithm {
            Algorithm::Ma => 1.0,
            _ => 0.7,
        })
    }

    pub fn effective_sigma(&self) -> f64 {
        if self.noise {
            self.sigma
        } else {
            0.0
        }
    }

    /// Constants for each experimental constraint, reduced to what the guard mode uses.
    pub fn guard_specs(&self, plant: &Plant) -> Result<Vec<LipschitzSpec>> {
        let base = match &self.constraint_specs {
            Some(s) => {
                check_dim(plant.n_constraints(), s.len())?;
                s.clone()
            }
            None => plant.oracle_specs(),
        };
        base.iter()
            .map(|s| match self.guard {
                GuardMode::Lumped | GuardMode::None => s.lumped_only().ok_or(Error::MissingInformation(
                    "lumped guard needs a lumped constant",
                )),
                GuardMode::Directional => {
                    if s.directional.is_none() {
                        return Err(Error::MissingInformation("directional guard needs directional constants"));
                    }
                    Ok(s.plain())
                }
            })
            .collect()
    }

    pub fn cost_refinement_spec(&self, plant: &Plant) -> LipschitzSpec {
        self.cost_spec
            .clone()
            .unwrap_or_else(|| plant.cost.oracle_spec().plain())
    }
}

/// Modifiers of modifier adaptation; constraint adaptation uses `eps` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModifierState {
    pub eps: Vec<f64>,
    pub lambda_g: Vec<Vec<f64>>,
    pub lambda_phi: Vec<f64>,
    pub alpha: f64,
}

impl ModifierState {
    pub fn zero(n_u: usize, n_g: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        Ok(ModifierState {
            eps: vec![0.0; n_g],
            lambda_g: vec![vec![0.0; n_u]; n_g],
            lambda_phi: vec![0.0; n_u],
            alpha,
        })
    }

    fn filter(alpha: f64, new: f64, old: f64) -> f64 {
        alpha * new + (1.0 - alpha) * old
    }

    /// `ε_k = α[g_p − g_model] + (1−α)ε_{k−1}`, coordinate-wise.
    pub fn update_eps(&mut self, plant_g: &[f64], model_g: &[f64]) {
        for ((e, p), m) in self.eps.iter_mut().zip(plant_g).zip(model_g) {
            *e = Self::filter(self.alpha, p - m, *e);
        }
    }

    /// First-order modifiers from plant and model gradients.
    pub fn update_lambda(&mut self, plant_grad_g: &[Vec<f64>], model_grad_g: &[Vec<f64>], plant_grad_phi: &[f64], model_grad_phi: &[f64]) {
        let a = self.alpha;
        for ((lam, pg), mg) in self.lambda_g.iter_mut().zip(plant_grad_g).zip(model_grad_g) {
            for ((l, p), m) in lam.iter_mut().zip(pg).zip(mg) {
                *l = Self::filter(a, p - m, *l);
            }
        }
        for ((l, p), m) in self.lambda_phi.iter_mut().zip(plant_grad_phi).zip(model_grad_phi) {
            *l = Self::filter(a, p - m, *l);
        }
    }
}

/// Where the next iterate came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub u_next: Point,
    /// Guard evaluated at `u_next`, when a guard is active.
    pub guard: Option<GuardDecision>,
    /// The subproblem had no feasible point, so the iterate was kept.
    pub held: bool,
}

/// Measured (or trimmed) values of cost and constraints at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuncValues {
    pub cost: f64,
    pub constraints: Vec<f64>,
}

fn guard_for(
    config: &CampaignConfig,
    specs: &[LipschitzSpec],
    u_k: &Point,
    g_upper: &[f64],
    backoffs: &[f64],
) -> Option<GuardSpec> {
    if config.guard == GuardMode::None {
        return None;
    }
    Some(GuardSpec {
        center: u_k.clone(),
        offsets: g_upper.iter().zip(backoffs).map(|(g, b)| g + b).collect(),
        specs: specs.to_vec(),
    })
}

fn finish(sol: Solution, guard: Option<&GuardSpec>) -> StepOutcome {
    let decision = guard.map(|g| {
        let margins = g.margins(sol.u.coords());
        let (mut bi, mut bm) = (None, f64::NEG_INFINITY);
        for (i, &m) in margins.iter().enumerate() {
            if m > bm {
                bi = Some(i);
                bm = m;
            }
        }
        GuardDecision {
            feasible: margins.iter().all(|&m| m <= GUARD_TOL),
            margin: bm,
            binding_constraint: bi,
            margins,
        }
    });
    StepOutcome {
        held: !sol.feasible,
        u_next: sol.u,
        guard: decision,
    }
}

/// One constraint-adaptation iteration.
///
/// Updates `ε` from the measured constraint values at `u_k` and solves
/// `min φ_model(u)` subject to `g_model(u) + ε ≤ 0`, the numerical constraints,
/// the box and, if guarded, `ḡ(u_k) + inc(u_k → u) ≤ 0`.
#[allow(clippy::too_many_arguments)]
pub fn constraint_adaptation_step<R: Rng + ?Sized>(
    state: &ModifierState,
    u_k: &Point,
    g_measured: &[f64],
    g_upper: &[f64],
    plant: &Plant,
    specs: &[LipschitzSpec],
    config: &CampaignConfig,
    rng: &mut R,
) -> Result<(StepOutcome, ModifierState)> {
    check_dim(plant.n_constraints(), g_measured.len())?;
    check_dim(plant.n_constraints(), g_upper.len())?;
    let mut next = state.clone();
    let model_g: Vec<f64> = plant
        .constraints
        .iter()
        .map(|c| c.model().eval_nominal(u_k.coords()))
        .collect();
    next.update_eps(g_measured, &model_g);
    let zeros = vec![0.0; plant.n_constraints()];
    let guard = guard_for(config, specs, u_k, g_upper, &zeros);
    let sp = ca_subproblem(plant, &next.eps, guard.clone());
    let sol = sp.solve(u_k, config.solver_starts, rng);
    Ok((finish(sol, guard.as_ref()), next))
}

/// The constraint-adaptation subproblem for given biases and guard.
pub fn ca_subproblem<'a>(plant: &'a Plant, eps: &[f64], guard: Option<GuardSpec>) -> Subproblem<'a> {
    let cost = plant.cost.model();
    let mut constraints: Vec<solver::Smooth<'a>> = Vec::new();
    for (c, &e) in plant.constraints.iter().zip(eps) {
        let m = c.model();
        constraints.push(Box::new(move |u: &[f64]| (m.eval_nominal(u) + e, m.gradient_nominal(u))));
    }
    for n in &plant.numerical {
        constraints.push(Box::new(move |u: &[f64]| (n.value(u), n.gradient(u))));
    }
    Subproblem {
        domain: &plant.domain,
        objective: Box::new(move |u: &[f64]| (cost.eval_nominal(u), cost.gradient_nominal(u))),
        constraints,
        guard,
    }
}

/// Probe points around `u_k`: backward along each axis, or forward when the
/// backward probe would leave the box. Probes are clipped to the box.
pub fn probe_points(u_k: &Point, domain: &BoxDomain, delta_e: f64) -> Vec<(Point, bool)> {
    (0..u_k.dim())
        .map(|i| {
            let forward = u_k[i] - delta_e < domain.lower()[i];
            let mut c = u_k.coords().to_vec();
            c[i] += if forward { delta_e } else { -delta_e };
            (domain.clip(&Point::from_vec_unchecked(c)), forward)
        })
        .collect()
}

/// Difference-quotient gradient from the value at `u_k` and one probe per axis.
pub fn finite_difference_gradient(u_k: &Point, f_k: f64, probes: &[(Point, f64)]) -> Result<Vec<f64>> {
    check_dim(u_k.dim(), probes.len())?;
    probes
        .iter()
        .enumerate()
        .map(|(i, (p, f))| {
            let h = p[i] - u_k[i];
            if h == 0.0 {
                return Err(Error::Config(format!("probe {i} coincides with the iterate")));
            }
            Ok((f - f_k) / h)
        })
        .collect()
}

/// Back-off constants `c_j` for the experimental constraints (ball radius `δ_e`).
pub fn backoff_constants(specs: &[LipschitzSpec], center: &Point, delta_e: f64, domain: &BoxDomain) -> Result<Vec<f64>> {
    specs
        .iter()
        .map(|s| backoff_constant(&s.without_derivative_bounds(), center, delta_e, domain))
        .collect()
}

/// One modifier-adaptation iteration from the (possibly trimmed) values at
/// `u_k` and at its probes.
///
/// Solves `min φ_model(u) + λ_φᵀu` subject to
/// `g_model(u) + ε + λ_gᵀ(u − u_k) ≤ 0`, `g_num(u) + δ_e·κ_num ≤ 0`, the box and,
/// if guarded, `ḡ(u_k) + inc(u_k → u) + δ_e·c ≤ 0`.
#[allow(clippy::too_many_arguments)]
pub fn modifier_adaptation_step<R: Rng + ?Sized>(
    state: &ModifierState,
    u_k: &Point,
    at_k: &FuncValues,
    probes: &[(Point, FuncValues)],
    g_upper: &[f64],
    plant: &Plant,
    specs: &[LipschitzSpec],
    config: &CampaignConfig,
    rng: &mut R,
) -> Result<(StepOutcome, ModifierState)> {
    let n_g = plant.n_constraints();
    check_dim(n_g, at_k.constraints.len())?;
    check_dim(n_g, g_upper.len())?;
    let cost_probes: Vec<(Point, f64)> = probes.iter().map(|(p, v)| (p.clone(), v.cost)).collect();
    let grad_phi = finite_difference_gradient(u_k, at_k.cost, &cost_probes)?;
    let mut grad_g = Vec::with_capacity(n_g);
    for j in 0..n_g {
        let pr: Vec<(Point, f64)> = probes.iter().map(|(p, v)| (p.clone(), v.constraints[j])).collect();
        grad_g.push(finite_difference_gradient(u_k, at_k.constraints[j], &pr)?);
    }
    let u = u_k.coords();
    let model_g: Vec<f64> = plant.constraints.iter().map(|c| c.model().eval_nominal(u)).collect();
    let model_grad_g: Vec<Vec<f64>> = plant.constraints.iter().map(|c| c.model().gradient_nominal(u)).collect();
    let model_grad_phi = plant.cost.model().gradient_nominal(u);

    let mut next = state.clone();
    next.update_eps(&at_k.constraints, &model_g);
    next.update_lambda(&grad_g, &model_grad_g, &grad_phi, &model_grad_phi);

    let guarded = config.guard != GuardMode::None;
    let backoffs: Vec<f64> = if guarded {
        backoff_constants(specs, u_k, config.delta_e, &plant.domain)?
            .into_iter()
            .map(|c| config.delta_e * c)
            .collect()
    } else {
        vec![0.0; n_g]
    };
    let guard = guard_for(config, specs, u_k, g_upper, &backoffs);
    let sp = ma_subproblem(plant, &next, u_k, if guarded { config.delta_e } else { 0.0 }, guard.clone());
    let sol = sp.solve(u_k, config.solver_starts, rng);
    Ok((finish(sol, guard.as_ref()), next))
}

/// The modifier-adaptation subproblem. `delta_e` scales the numerical-constraint back-offs.
pub fn ma_subproblem<'a>(
    plant: &'a Plant,
    state: &ModifierState,
    u_k: &Point,
    delta_e: f64,
    guard: Option<GuardSpec>,
) -> Subproblem<'a> {
    let cost = plant.cost.model();
    let lphi = state.lambda_phi.clone();
    let uk = u_k.coords().to_vec();
    let mut constraints: Vec<solver::Smooth<'a>> = Vec::new();
    for ((c, &e), lam) in plant.constraints.iter().zip(&state.eps).zip(&state.lambda_g) {
        let m = c.model();
        let lam = lam.clone();
        let uk = uk.clone();
        constraints.push(Box::new(move |u: &[f64]| {
            let lin: f64 = lam.iter().zip(u.iter().zip(&uk)).map(|(l, (a, b))| l * (a - b)).sum();
            let mut g = m.gradient_nominal(u);
            for (gi, l) in g.iter_mut().zip(&lam) {
                *gi += l;
            }
            (m.eval_nominal(u) + e + lin, g)
        }));
    }
    for n in &plant.numerical {
        let b = delta_e * n.oracle_lumped();
        constraints.push(Box::new(move |u: &[f64]| (n.value(u) + b, n.gradient(u))));
    }
    Subproblem {
        domain: &plant.domain,
        objective: Box::new(move |u: &[f64]| {
            let mut g = cost.gradient_nominal(u);
            let mut v = cost.eval_nominal(u);
            for ((gi, l), x) in g.iter_mut().zip(&lphi).zip(u) {
                *gi += l;
                v += l * x;
            }
            (v, g)
        }),
        constraints,
        guard,
    }
}

/// One guarded steepest-descent step: `u_k − η∇φ_model(u_k)`, projected onto
/// the box and pulled back toward `u_k` until the guard holds.
pub fn descent_step(
    u_k: &Point,
    g_upper: &[f64],
    plant: &Plant,
    specs: &[LipschitzSpec],
    config: &CampaignConfig,
) -> Result<StepOutcome> {
    check_dim(plant.n_constraints(), g_upper.len())?;
    let grad = plant.cost.model().gradient_nominal(u_k.coords());
    let raw = Point::from_vec_unchecked(u_k.coords().iter().zip(&grad).map(|(u, g)| u - config.eta * g).collect());
    let mut u = plant.domain.clip(&raw).into_vec();
    let zeros = vec![0.0; plant.n_constraints()];
    let guard = guard_for(config, specs, u_k, g_upper, &zeros);
    let mut held = false;
    if let Some(g) = &guard {
        if g.satisfiable() {
            u = g.restore(&u);
        } else {
            u = u_k.coords().to_vec();
            held = true;
        }
    }
    let objective = plant.cost.model().eval_nominal(&u);
    let mut out = finish(
        Solution {
            u: Point::from_vec_unchecked(u),
            objective,
            feasible: true,
        },
        guard.as_ref(),
    );
    out.held = held;
    Ok(out)
}
