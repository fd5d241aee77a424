//! The experiment loop: apply an iterate, measure, probe, update, solve, repeat.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    backoff_constants, constraint_adaptation_step, descent_step, modifier_adaptation_step, probe_points, Algorithm,
    CampaignConfig, FuncValues, GuardMode, ModifierState, StepOutcome,
};
use crate::bounds::LipschitzSpec;
use crate::error::{Error, Result};
use crate::estimation::{consistency_repair, CheckMode};
use crate::geometry::Point;
use crate::plants::{Func, Plant};
use crate::uncertainty::{nominal_bounds, refine_bounds, Measurement, MeasurementTag, DEFAULT_TOL};

/// Additive floor for the repair rule when refinement finds inconsistent data.
const REPAIR_INFLATION: f64 = 0.1;
const START_ATTEMPTS: usize = 100_000;

const NOISE_STREAM: u64 = 1;
const SOLVER_STREAM: u64 = 2;
const START_STREAM: u64 = 3;

/// One applied experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub index: usize,
    pub iteration: usize,
    pub tag: MeasurementTag,
    pub point: Vec<f64>,
    pub measured_cost: f64,
    pub measured_constraints: Vec<f64>,
    pub true_cost: f64,
    pub true_constraints: Vec<f64>,
    /// Largest guard value certifying this iterate (`≤ 0` passes); empty for
    /// `u_0`, probes, and unguarded runs.
    pub guard_margin: Option<f64>,
    pub cost_lower: f64,
    pub cost_upper: f64,
    pub constraint_lower: Vec<f64>,
    pub constraint_upper: Vec<f64>,
}

impl ExperimentRecord {
    pub fn violated(&self) -> usize {
        self.true_constraints.iter().filter(|g| **g > 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignLog {
    pub plant: String,
    pub config: CampaignConfig,
    pub records: Vec<ExperimentRecord>,
    /// Constraint values `> 0` at main iterates.
    pub iterate_violations: usize,
    /// Constraint values `> 0` at probes.
    pub probe_violations: usize,
    pub violations: usize,
    /// Iterations whose subproblem had no feasible point (the iterate was kept).
    pub held_iterations: Vec<usize>,
    /// Times refinement met inconsistent data and the constants were inflated.
    pub repairs: usize,
}

impl CampaignLog {
    pub fn iterates(&self) -> impl Iterator<Item = &ExperimentRecord> {
        self.records.iter().filter(|r| r.tag == MeasurementTag::MainIterate)
    }

    pub fn probes(&self) -> impl Iterator<Item = &ExperimentRecord> {
        self.records.iter().filter(|r| r.tag == MeasurementTag::Probe)
    }

    /// True cost at `u_0, …, u_{k_f}`.
    pub fn iterate_costs(&self) -> Vec<f64> {
        self.iterates().map(|r| r.true_cost).collect()
    }

    pub fn final_point(&self) -> &[f64] {
        &self.iterates().last().expect("a log always holds u_0").point
    }

    /// `‖u_{k+1} − u_k‖₂` for consecutive iterates.
    pub fn step_norms(&self) -> Vec<f64> {
        let pts: Vec<&[f64]> = self.iterates().map(|r| r.point.as_slice()).collect();
        pts.windows(2)
            .map(|w| crate::geometry::euclidean(w[0], w[1]))
            .collect()
    }
}

fn empty_record(m: &Measurement, iteration: usize, plant: &Plant) -> ExperimentRecord {
    let u = m.at.coords();
    ExperimentRecord {
        index: m.index,
        iteration,
        tag: m.tag,
        point: u.to_vec(),
        measured_cost: 0.0,
        measured_constraints: Vec::with_capacity(plant.n_constraints()),
        true_cost: plant.true_cost(u),
        true_constraints: plant.true_constraints(u),
        guard_margin: None,
        cost_lower: 0.0,
        cost_upper: 0.0,
        constraint_lower: Vec::with_capacity(plant.n_constraints()),
        constraint_upper: Vec::with_capacity(plant.n_constraints()),
    }
}

struct Experiments {
    cost: Vec<Measurement>,
    constraints: Vec<Vec<Measurement>>,
    records: Vec<ExperimentRecord>,
}

impl Experiments {
    fn apply(
        &mut self,
        plant: &Plant,
        u: &Point,
        sigma: f64,
        rng: &mut ChaCha8Rng,
        tag: MeasurementTag,
        iteration: usize,
    ) -> Result<usize> {
        let index = self.records.len();
        let c = plant.measure(Func::Cost, u, sigma, rng, tag, index)?;
        let mut rec = empty_record(&c, iteration, plant);
        let b = nominal_bounds(&c);
        rec.measured_cost = c.value;
        rec.cost_lower = b.lower;
        rec.cost_upper = b.upper;
        self.cost.push(c);
        for j in 0..plant.n_constraints() {
            let g = plant.measure(Func::Constraint(j), u, sigma, rng, tag, index)?;
            let b = nominal_bounds(&g);
            rec.measured_constraints.push(g.value);
            rec.constraint_lower.push(b.lower);
            rec.constraint_upper.push(b.upper);
            self.constraints[j].push(g);
        }
        self.records.push(rec);
        Ok(index)
    }
}

/// Refines `data` with `spec`, inflating `spec` on inconsistent data.
fn refine_with_repair(
    data: &[Measurement],
    spec: &mut LipschitzSpec,
    repairs: &mut usize,
) -> Result<Vec<(f64, f64)>> {
    loop {
        match refine_bounds(data, spec, DEFAULT_TOL) {
            Ok(r) => return Ok(r.bounds.iter().map(|b| (b.lower, b.upper)).collect()),
            Err(Error::InconsistentData { .. }) => {
                let rep = consistency_repair(spec, data, REPAIR_INFLATION, CheckMode::Interval)?;
                if rep.inflation_steps == 0 {
                    // only coincident pairs disagree; nothing left to inflate
                    return Ok(data.iter().map(|m| {
                        let b = nominal_bounds(m);
                        (b.lower, b.upper)
                    }).collect());
                }
                *spec = rep.repaired;
                *repairs += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

fn sample_start(
    plant: &Plant,
    config: &CampaignConfig,
    specs: &[LipschitzSpec],
    rng: &mut ChaCha8Rng,
) -> Result<Point> {
    for _ in 0..START_ATTEMPTS {
        let c: Vec<f64> = (0..plant.dim())
            .map(|i| {
                let (l, u) = (plant.domain.lower()[i], plant.domain.upper()[i]);
                if u > l {
                    rng.random_range(l..=u)
                } else {
                    l
                }
            })
            .collect();
        let p = Point::from_vec_unchecked(c);
        if start_compliant(plant, config, specs, &p)? {
            return Ok(p);
        }
    }
    Err(Error::Config(format!("no compliant start found for {}", plant.id)))
}

/// Does `u` meet the constraints, with the back-offs modifier adaptation needs?
fn start_compliant(plant: &Plant, config: &CampaignConfig, specs: &[LipschitzSpec], u: &Point) -> Result<bool> {
    let backed_off = config.algorithm == Algorithm::Ma && config.guard != GuardMode::None;
    let (exp_b, num_scale) = if backed_off {
        (
            backoff_constants(specs, u, config.delta_e, &plant.domain)?
                .into_iter()
                .map(|c| config.delta_e * c)
                .collect(),
            config.delta_e,
        )
    } else {
        (vec![0.0; plant.n_constraints()], 0.0)
    };
    let g = plant.true_constraints(u.coords());
    let exp_ok = g.iter().zip(&exp_b).all(|(g, b)| g + b <= 0.0);
    let num_ok = plant
        .numerical
        .iter()
        .all(|n| n.value(u.coords()) + num_scale * n.oracle_lumped() <= 0.0);
    Ok(exp_ok && num_ok)
}

/// Runs one campaign of `config.max_iterations` iterations on `plant`.
///
/// Deterministic in `config.seed`. Noise, solver starts and the random
/// initial point draw from separate streams, so changing one setting does not
/// shift the others.
pub fn run_campaign(plant: &Plant, config: &CampaignConfig) -> Result<CampaignLog> {
    config.validate()?;
    let mut specs = config.guard_specs(plant)?;
    let mut cost_spec = if config.guard == GuardMode::Directional {
        config.cost_refinement_spec(plant)
    } else {
        config
            .cost_refinement_spec(plant)
            .lumped_only()
            .ok_or(Error::MissingInformation("cost refinement needs a lumped constant"))?
    };
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed);
    noise_rng.set_stream(NOISE_STREAM);
    let mut solver_rng = ChaCha8Rng::seed_from_u64(config.seed);
    solver_rng.set_stream(SOLVER_STREAM);
    let mut start_rng = ChaCha8Rng::seed_from_u64(config.seed);
    start_rng.set_stream(START_STREAM);

    let mut u = if config.random_start {
        sample_start(plant, config, &specs, &mut start_rng)?
    } else {
        plant.u0.clone()
    };
    if !start_compliant(plant, config, &specs, &u)? {
        return Err(Error::NonCompliantStart);
    }

    let sigma = config.effective_sigma();
    let refine = config.trim && sigma > 0.0;
    let mut ex = Experiments {
        cost: Vec::new(),
        constraints: vec![Vec::new(); plant.n_constraints()],
        records: Vec::new(),
    };
    let mut state = ModifierState::zero(plant.dim(), plant.n_constraints(), config.alpha_value())?;
    let mut held = Vec::new();
    let mut repairs = 0;
    let mut pending_margin: Option<f64> = None;

    for k in 0..=config.max_iterations {
        let main = ex.apply(plant, &u, sigma, &mut noise_rng, MeasurementTag::MainIterate, k)?;
        ex.records[main].guard_margin = pending_margin.take();
        if k == config.max_iterations {
            break;
        }
        let mut probe_idx = Vec::new();
        if config.algorithm == Algorithm::Ma {
            for (p, _) in probe_points(&u, &plant.domain, config.delta_e) {
                probe_idx.push(ex.apply(plant, &p, sigma, &mut noise_rng, MeasurementTag::Probe, k)?);
            }
        }

        let values = |i: usize| FuncValues {
            cost: ex.cost[i].value,
            constraints: ex.constraints.iter().map(|g| g[i].value).collect(),
        };
        let mut at_k = values(main);
        let mut probes: Vec<(Point, FuncValues)> = probe_idx
            .iter()
            .map(|&i| (ex.cost[i].at.clone(), values(i)))
            .collect();
        let mut g_upper: Vec<f64> = ex.constraints.iter().map(|g| nominal_bounds(&g[main]).upper).collect();

        if refine {
            let cb = refine_with_repair(&ex.cost, &mut cost_spec, &mut repairs)?;
            let mut gb = Vec::with_capacity(plant.n_constraints());
            for (j, data) in ex.constraints.iter().enumerate() {
                gb.push(refine_with_repair(data, &mut specs[j], &mut repairs)?);
            }
            let clamp = |v: f64, b: (f64, f64)| v.max(b.0).min(b.1);
            at_k.cost = clamp(at_k.cost, cb[main]);
            for ((c, up), b) in at_k.constraints.iter_mut().zip(&mut g_upper).zip(&gb) {
                *c = clamp(*c, b[main]);
                *up = b[main].1;
            }
            for ((_, v), &i) in probes.iter_mut().zip(&probe_idx) {
                v.cost = clamp(v.cost, cb[i]);
                for (c, b) in v.constraints.iter_mut().zip(&gb) {
                    *c = clamp(*c, b[i]);
                }
            }
            for &i in std::iter::once(&main).chain(&probe_idx) {
                let r = &mut ex.records[i];
                (r.cost_lower, r.cost_upper) = cb[i];
                for ((lo, up), b) in r.constraint_lower.iter_mut().zip(&mut r.constraint_upper).zip(&gb) {
                    (*lo, *up) = b[i];
                }
            }
        }

        let out: StepOutcome = match config.algorithm {
            Algorithm::Ca => {
                let (o, s) = constraint_adaptation_step(
                    &state,
                    &u,
                    &at_k.constraints,
                    &g_upper,
                    plant,
                    &specs,
                    config,
                    &mut solver_rng,
                )?;
                state = s;
                o
            }
            Algorithm::Ma => {
                let (o, s) = modifier_adaptation_step(
                    &state,
                    &u,
                    &at_k,
                    &probes,
                    &g_upper,
                    plant,
                    &specs,
                    config,
                    &mut solver_rng,
                )?;
                state = s;
                o
            }
            Algorithm::Gd => descent_step(&u, &g_upper, plant, &specs, config)?,
        };
        if out.held {
            held.push(k);
        }
        pending_margin = out.guard.map(|g| g.margin);
        u = out.u_next;
    }

    let iterate_violations: usize = ex
        .records
        .iter()
        .filter(|r| r.tag == MeasurementTag::MainIterate)
        .map(|r| r.violated())
        .sum();
    let probe_violations: usize = ex
        .records
        .iter()
        .filter(|r| r.tag == MeasurementTag::Probe)
        .map(|r| r.violated())
        .sum();
    Ok(CampaignLog {
        plant: plant.id.to_string(),
        config: config.clone(),
        records: ex.records,
        iterate_violations,
        probe_violations,
        violations: iterate_violations + probe_violations,
        held_iterations: held,
        repairs,
    })
}

/// `(1/(k_f+1)) Σ_k (φ_A,k − φ_B,k)` over the true costs of the main iterates.
pub fn delta_phi_ave(a: &CampaignLog, b: &CampaignLog) -> Result<f64> {
    let (ca, cb) = (a.iterate_costs(), b.iterate_costs());
    crate::geometry::check_dim(ca.len(), cb.len())?;
    Ok(ca.iter().zip(&cb).map(|(x, y)| x - y).sum::<f64>() / ca.len() as f64)
}

/// First iteration after which the true cost stays within 1% of `optimal_cost`.
pub fn convergence_iteration(log: &CampaignLog, optimal_cost: f64) -> Option<usize> {
    let tol = 0.01 * optimal_cost.abs().max(1e-9);
    let costs = log.iterate_costs();
    let mut first = None;
    for (k, c) in costs.iter().enumerate() {
        if (c - optimal_cost).abs() <= tol {
            first.get_or_insert(k);
        } else {
            first = None;
        }
    }
    first
}

/// Two campaigns on identical noise: A without trimming, B with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedResult {
    pub delta_phi_ave: f64,
    pub untrimmed: CampaignLog,
    pub trimmed: CampaignLog,
}

pub fn compare_trim(plant: &Plant, config: &CampaignConfig) -> Result<PairedResult> {
    let a = run_campaign(plant, &CampaignConfig { trim: false, ..config.clone() })?;
    let b = run_campaign(plant, &CampaignConfig { trim: true, ..config.clone() })?;
    Ok(PairedResult {
        delta_phi_ave: delta_phi_ave(&a, &b)?,
        untrimmed: a,
        trimmed: b,
    })
}
