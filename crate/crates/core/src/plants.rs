//! Simulated experimental systems with analytic ground truth.
//!
//! Every plant lives on the unit box. Each experimental function belongs to a
//! parametric family: the plant uses the true parameters, the model handed to
//! the optimizers uses deliberately wrong ones, and the family's parameter box
//! contains both. Oracle Lipschitz constants are derived by hand and checked
//! against dense-grid difference quotients when the catalog is built.
//!
//! | id       | constraint                               | point of the plant                       |
//! |----------|------------------------------------------|------------------------------------------|
//! | `p-lin`  | `u₁ + u₂ − 1`                            | linear guard, optimistic model           |
//! | `p-quad` | convex quadratic, optimum close to it    | perturbation back-offs, noisy trimming   |
//! | `p-conv` | convex in `u₁`, concave in `u₂`          | curvature-aware directional bounds       |
//! | `p-prem` | `0.3u₁ + u₂ − 0.7`, linear cost          | guarded descent stalls on the boundary   |

use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::bounds::{CurvatureInfo, DerivativeBounds, DirectionalConstants, LipschitzSpec, LumpedConstant};
use crate::error::{Error, Result};
use crate::estimation::{EvalFn, GradFn, ParametricModel};
use crate::geometry::{euclidean, BoxDomain, Point};
use crate::uncertainty::{Measurement, MeasurementTag};

/// Noise standard deviation used unless a run overrides it.
pub const DEFAULT_SIGMA: f64 = 0.07;
/// Noise bounds are placed at this many standard deviations.
pub const NOISE_BOUND_SIGMAS: f64 = 3.0;

/// Grid nodes per dimension for the construction-time oracle check.
const ORACLE_GRID: usize = 21;
const ORACLE_TOL: f64 = 1e-9;

/// One experimental (or numerical) function of a plant.
#[derive(Debug, Clone)]
pub struct PlantFunction {
    pub name: &'static str,
    family: ParametricModel,
    theta_true: Vec<f64>,
    oracle: LipschitzSpec,
}

impl PlantFunction {
    fn new(
        name: &'static str,
        eval: fn(&[f64], &[f64]) -> f64,
        grad: fn(&[f64], &[f64]) -> Vec<f64>,
        theta_true: Vec<f64>,
        theta_model: Vec<f64>,
        theta_box: (Vec<f64>, Vec<f64>),
        oracle: LipschitzSpec,
    ) -> Result<Self> {
        let family = ParametricModel::new(
            Arc::new(eval) as EvalFn,
            Some(Arc::new(grad) as GradFn),
            BoxDomain::unit(2),
            BoxDomain::new(theta_box.0, theta_box.1)?,
            theta_model,
        )?;
        if !family.param_box().contains(&Point::new(theta_true.clone())?) {
            return Err(Error::Config(format!("{name}: true parameters outside the parameter box")));
        }
        oracle.validate()?;
        Ok(PlantFunction {
            name,
            family,
            theta_true,
            oracle,
        })
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        self.family.eval(u, &self.theta_true)
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        self.family.gradient(u, &self.theta_true)
    }

    pub fn theta_true(&self) -> &[f64] {
        &self.theta_true
    }

    /// The mismatched model handed to optimizers.
    pub fn model(&self) -> &ParametricModel {
        &self.family
    }

    /// The model family with `θ` pinned at the true parameters.
    pub fn exact_model(&self) -> ParametricModel {
        let t = self.theta_true.clone();
        self.family
            .with_nominal(t.clone())
            .and_then(|m| m.with_param_box(BoxDomain::new(t.clone(), t)?))
            .expect("true parameters lie in the parameter box")
    }

    /// Analytic constants of the true function: lumped, directional and curvature.
    pub fn oracle_spec(&self) -> &LipschitzSpec {
        &self.oracle
    }

    /// [`Self::oracle_spec`] plus the exact gradient at `u` as derivative bounds,
    /// when curvature information is available.
    pub fn oracle_spec_at(&self, u: &Point) -> Result<LipschitzSpec> {
        if self.oracle.curvature.is_none() {
            return Ok(self.oracle.clone());
        }
        self.oracle
            .clone()
            .with_derivative_bounds(DerivativeBounds::exact(u.clone(), self.gradient(u.coords()))?)
    }

    pub fn oracle_lumped(&self) -> f64 {
        self.oracle.lumped.map(|k| k.value()).unwrap_or(f64::NAN)
    }

    /// Checks the oracle constants against difference quotients on a grid.
    fn check_oracle(&self, domain: &BoxDomain) -> Result<()> {
        let nodes = domain.grid(ORACLE_GRID);
        let vals: Vec<f64> = nodes.iter().map(|p| self.value(p.coords())).collect();
        let kappa = self.oracle_lumped();
        let dir = self.oracle.directional.as_ref();
        for a in 0..nodes.len() {
            for b in (a + 1)..nodes.len() {
                let (pa, pb) = (nodes[a].coords(), nodes[b].coords());
                let d = euclidean(pa, pb);
                let q = (vals[b] - vals[a]) / d;
                if q.abs() > kappa * (1.0 + ORACLE_TOL) + ORACLE_TOL {
                    return Err(Error::InvalidConstant(format!(
                        "{}: difference quotient {q} exceeds oracle constant {kappa}",
                        self.name
                    )));
                }
                if let Some(dir) = dir {
                    let moved: Vec<usize> = (0..pa.len()).filter(|&i| pa[i] != pb[i]).collect();
                    if let [i] = moved[..] {
                        let qi = (vals[b] - vals[a]) / (pb[i] - pa[i]);
                        if qi < dir.lower()[i] - ORACLE_TOL || qi > dir.upper()[i] + ORACLE_TOL {
                            return Err(Error::InvalidConstant(format!(
                                "{}: quotient {qi} along dimension {i} outside the oracle range",
                                self.name
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Cost,
    Constraint(usize),
}

#[derive(Debug, Clone)]
pub struct Plant {
    pub id: &'static str,
    pub description: &'static str,
    pub domain: BoxDomain,
    pub cost: PlantFunction,
    /// Experimental constraints `g_p,j(u) ≤ 0`.
    pub constraints: Vec<PlantFunction>,
    /// Numerical constraints `g_j(u) ≤ 0`, known exactly; the oracle lumped
    /// constant is used for their back-off.
    pub numerical: Vec<PlantFunction>,
    pub noise_sigma: f64,
    pub u0: Point,
    pub optimum: Point,
    pub optimal_cost: f64,
}

impl Plant {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn function(&self, f: Func) -> &PlantFunction {
        match f {
            Func::Cost => &self.cost,
            Func::Constraint(j) => &self.constraints[j],
        }
    }

    pub fn true_constraints(&self, u: &[f64]) -> Vec<f64> {
        self.constraints.iter().map(|c| c.value(u)).collect()
    }

    pub fn true_cost(&self, u: &[f64]) -> f64 {
        self.cost.value(u)
    }

    pub fn oracle_specs(&self) -> Vec<LipschitzSpec> {
        self.constraints.iter().map(|c| c.oracle_spec().clone()).collect()
    }

    /// Runs one experiment on function `f`: the true value plus `N(0, σ²)` noise,
    /// with noise bounds at `±3σ`. With `σ = 0` no random number is drawn.
    pub fn measure<R: Rng + ?Sized>(
        &self,
        f: Func,
        u: &Point,
        sigma: f64,
        rng: &mut R,
        tag: MeasurementTag,
        index: usize,
    ) -> Result<Measurement> {
        if !self.domain.contains(u) {
            return Err(Error::OutsideDomain);
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::Config(format!("noise level must be nonnegative, got {sigma}")));
        }
        let truth = self.function(f).value(u.coords());
        let w = if sigma > 0.0 {
            Normal::new(0.0, sigma)
                .map_err(|e| Error::Config(e.to_string()))?
                .sample(rng)
        } else {
            0.0
        };
        let b = NOISE_BOUND_SIGMAS * sigma;
        Measurement::new(u.clone(), truth + w, -b, b, tag, index)
    }

    fn check(&self) -> Result<()> {
        for f in std::iter::once(&self.cost)
            .chain(&self.constraints)
            .chain(&self.numerical)
        {
            f.check_oracle(&self.domain)?;
        }
        if self.true_constraints(self.u0.coords()).iter().any(|g| *g > 0.0) {
            return Err(Error::Config(format!("{}: initial point infeasible", self.id)));
        }
        Ok(())
    }
}

fn spec(lumped: f64, lower: [f64; 2], upper: [f64; 2], convex: &[usize], concave: &[usize]) -> LipschitzSpec {
    let dom = BoxDomain::unit(2);
    let mut s = LipschitzSpec::directional(
        DirectionalConstants::new(lower.to_vec(), upper.to_vec(), dom.clone()).expect("ordered constants"),
    )
    .with_lumped(LumpedConstant::new(lumped).expect("nonnegative"));
    if !convex.is_empty() || !concave.is_empty() {
        s = s
            .with_curvature(
                CurvatureInfo::new(convex.iter().copied(), concave.iter().copied(), dom)
                    .expect("indices in range"),
            )
            .expect("directional present");
    }
    s
}

fn lin_plant() -> Result<Plant> {
    let cost = PlantFunction::new(
        "cost",
        |u, t| (u[0] - t[0]).powi(2) + (u[1] - t[1]).powi(2),
        |u, t| vec![2.0 * (u[0] - t[0]), 2.0 * (u[1] - t[1])],
        vec![0.9, 0.8],
        vec![0.85, 0.8],
        (vec![0.8, 0.7], vec![1.0, 0.9]),
        // gradient norm is largest at the origin
        spec(2.0 * (0.81f64 + 0.64).sqrt(), [-1.8, -1.6], [0.2, 0.4], &[0, 1], &[]),
    )?;
    let g = PlantFunction::new(
        "g1",
        |u, t| t[0] * u[0] + t[1] * u[1] - 1.0,
        |_, t| vec![t[0], t[1]],
        vec![1.0, 1.0],
        vec![0.8, 0.8],
        (vec![0.7, 0.7], vec![1.1, 1.1]),
        spec(2f64.sqrt(), [1.0, 1.0], [1.0, 1.0], &[0, 1], &[0, 1]),
    )?;
    Ok(Plant {
        id: "p-lin",
        description: "linear constraint u1+u2-1 with a quadratic cost; the model underestimates the constraint",
        domain: BoxDomain::unit(2),
        cost,
        constraints: vec![g],
        numerical: vec![],
        noise_sigma: DEFAULT_SIGMA,
        u0: Point::new(vec![0.2, 0.2])?,
        optimum: Point::new(vec![0.55, 0.45])?,
        optimal_cost: 0.245,
    })
}

fn quad_plant() -> Result<Plant> {
    let cost = PlantFunction::new(
        "cost",
        |u, t| 2.0 * (u[0] - t[0]).powi(2) + 1.5 * (u[1] - t[1]).powi(2) - 1.0,
        |u, t| vec![4.0 * (u[0] - t[0]), 3.0 * (u[1] - t[1])],
        vec![0.3, 0.4],
        vec![0.4, 0.3],
        (vec![0.2, 0.2], vec![0.5, 0.5]),
        spec((2.8f64 * 2.8 + 1.8 * 1.8).sqrt(), [-1.2, -1.2], [2.8, 1.8], &[0, 1], &[]),
    )?;
    let g = PlantFunction::new(
        "g1",
        |u, t| t[0] - t[1] * u[0] - t[2] * u[1] + 0.6 * u[0] * u[0] + 0.5 * u[1] * u[1],
        |u, t| vec![-t[1] + 1.2 * u[0], -t[2] + u[1]],
        vec![0.276, 1.2, 1.0],
        vec![0.2, 1.3, 1.1],
        (vec![0.15, 1.1, 0.9], vec![0.35, 1.35, 1.15]),
        spec((1.44f64 + 1.0).sqrt(), [-1.2, -1.0], [0.0, 0.0], &[0, 1], &[]),
    )?;
    let num = PlantFunction::new(
        "n1",
        |u, _| u[0] + u[1] - 1.7,
        |_, _| vec![1.0, 1.0],
        vec![],
        vec![],
        (vec![], vec![]),
        spec(2f64.sqrt(), [1.0, 1.0], [1.0, 1.0], &[0, 1], &[0, 1]),
    )?;
    Ok(Plant {
        id: "p-quad",
        description: "convex quadratic constraint with the optimum close to it; starts at a suboptimal corner-side point",
        domain: BoxDomain::unit(2),
        cost,
        constraints: vec![g],
        numerical: vec![num],
        noise_sigma: DEFAULT_SIGMA,
        u0: Point::new(vec![0.6, 13.0 / 15.0])?,
        optimum: Point::new(vec![0.3, 0.4])?,
        optimal_cost: -1.0,
    })
}

fn conv_plant() -> Result<Plant> {
    let cost = PlantFunction::new(
        "cost",
        |u, t| (u[0] - t[0]).powi(2) + (u[1] - t[1]).powi(2),
        |u, t| vec![2.0 * (u[0] - t[0]), 2.0 * (u[1] - t[1])],
        vec![0.8, 0.3],
        vec![0.75, 0.35],
        (vec![0.7, 0.25], vec![0.85, 0.4]),
        spec((1.6f64 * 1.6 + 1.4 * 1.4).sqrt(), [-1.6, -0.6], [0.4, 1.4], &[0, 1], &[]),
    )?;
    let g = PlantFunction::new(
        "g1",
        |u, t| u[0] * u[0] - u[1] * u[1] + t[0] * u[0] + t[1] * u[1] - 0.5,
        |u, t| vec![2.0 * u[0] + t[0], -2.0 * u[1] + t[1]],
        vec![0.4, 0.6],
        vec![0.3, 0.7],
        (vec![0.2, 0.4], vec![0.6, 0.8]),
        spec((2.4f64 * 2.4 + 1.4 * 1.4).sqrt(), [0.4, -1.4], [2.4, 0.6], &[0], &[1]),
    )?;
    let u1 = -0.2 + 0.45f64.sqrt();
    Ok(Plant {
        id: "p-conv",
        description: "constraint convex in u1 and concave in u2 with analytic derivative bounds",
        domain: BoxDomain::unit(2),
        cost,
        constraints: vec![g],
        numerical: vec![],
        noise_sigma: DEFAULT_SIGMA,
        u0: Point::new(vec![0.1, 0.1])?,
        optimum: Point::new(vec![u1, 0.3])?,
        optimal_cost: (u1 - 0.8).powi(2),
    })
}

fn prem_plant() -> Result<Plant> {
    let cost = PlantFunction::new(
        "cost",
        |u, t| -t[0] * u[0] - t[1] * u[1],
        |_, t| vec![-t[0], -t[1]],
        vec![1.0, 2.0],
        vec![1.1, 1.9],
        (vec![0.9, 1.8], vec![1.2, 2.1]),
        spec(5f64.sqrt(), [-1.0, -2.0], [-1.0, -2.0], &[0, 1], &[0, 1]),
    )?;
    let g = PlantFunction::new(
        "g1",
        |u, t| t[0] * u[0] + t[1] * u[1] - 0.7,
        |_, t| vec![t[0], t[1]],
        vec![0.3, 1.0],
        vec![0.25, 1.0],
        (vec![0.2, 0.9], vec![0.4, 1.1]),
        spec(1.09f64.sqrt(), [0.3, 1.0], [0.3, 1.0], &[0, 1], &[0, 1]),
    )?;
    Ok(Plant {
        id: "p-prem",
        description: "linear cost pushing into a slanted linear constraint; guarded steepest descent stalls on it",
        domain: BoxDomain::unit(2),
        cost,
        constraints: vec![g],
        numerical: vec![],
        noise_sigma: DEFAULT_SIGMA,
        u0: Point::new(vec![0.1, 0.1])?,
        optimum: Point::new(vec![1.0, 0.4])?,
        optimal_cost: -1.8,
    })
}

/// The plant catalog. Built and checked once.
pub fn builtin_plants() -> &'static [Plant] {
    static CATALOG: OnceLock<Vec<Plant>> = OnceLock::new();
    CATALOG.get_or_init(|| {
        let plants = vec![
            lin_plant().expect("p-lin definition"),
            quad_plant().expect("p-quad definition"),
            conv_plant().expect("p-conv definition"),
            prem_plant().expect("p-prem definition"),
        ];
        for p in &plants {
            if let Err(e) = p.check() {
                panic!("plant {} failed its oracle check: {e}", p.id);
            }
        }
        plants
    })
}

pub fn plant_by_id(id: &str) -> Result<&'static Plant> {
    builtin_plants()
        .iter()
        .find(|p| p.id == id)
        .ok_or_else(|| Error::UnknownId(id.to_string()))
}
