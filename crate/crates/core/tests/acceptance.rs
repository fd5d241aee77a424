//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --release --test acceptance` (the test profile is
//! optimized anyway). Exits nonzero if any criterion fails.

use std::time::Instant;

use lipexp::algorithms::{compare_trim, run_campaign, Algorithm, CampaignConfig, GuardMode};
use lipexp::bounds::{
    directional_lower_bound, directional_upper_bound, is_directional_tighter, lumped_bounds, LumpedConstant, Side,
};
use lipexp::cli::io::{iterates_csv, summary_json, BatchSummary};
use lipexp::estimation::{consistency_repair, estimate_directional_from_model, CheckMode, EstimateOptions};
use lipexp::plants::{builtin_plants, plant_by_id, DEFAULT_SIGMA};
use lipexp::uncertainty::{nominal_bounds, refine_bounds, Measurement, MeasurementTag};
use lipexp::{BoxDomain, LipschitzSpec, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &'static str, pass: bool, detail: String) -> Outcome {
    println!("[{}] {id}. {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { id, name, pass, detail }
}

/// Exactly zero true violations for guarded constraint adaptation; the
/// unguarded optimistic run must violate at least once. Budget 60 s.
fn guard_soundness() -> Outcome {
    let t0 = Instant::now();
    let mut violations = 0;
    let mut campaigns = 0;
    for id in ["p-lin", "p-quad"] {
        let plant = plant_by_id(id).unwrap();
        for seed in 0..100 {
            let cfg = CampaignConfig {
                algorithm: Algorithm::Ca,
                guard: GuardMode::Lumped,
                max_iterations: 50,
                random_start: true,
                seed,
                ..Default::default()
            };
            let log = run_campaign(plant, &cfg).unwrap();
            violations += log.violations;
            campaigns += 1;
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let contrast = run_campaign(
        plant_by_id("p-lin").unwrap(),
        &CampaignConfig {
            algorithm: Algorithm::Ca,
            guard: GuardMode::None,
            max_iterations: 50,
            ..Default::default()
        },
    )
    .unwrap()
    .violations;
    report(
        1,
        "guard soundness",
        violations == 0 && contrast >= 1 && elapsed < 60.0,
        format!(
            "{campaigns} guarded campaigns x 50 iterations: {violations} violations in {elapsed:.1} s (limit 60 s); unguarded optimistic run: {contrast} violations (need >= 1)"
        ),
    )
}

/// Modifier adaptation with back-offs: iterates meet `g + δ_e·κ ≤ 0`, probes `g ≤ 0`.
fn backoff_soundness() -> Outcome {
    let plant = plant_by_id("p-quad").unwrap();
    let delta_e = 0.05;
    let kappa = plant.constraints[0].oracle_lumped();
    let (mut bad_iter, mut bad_probe, mut n_iter, mut n_probe) = (0, 0, 0, 0);
    for seed in 0..100 {
        let cfg = CampaignConfig {
            algorithm: Algorithm::Ma,
            guard: GuardMode::Lumped,
            delta_e,
            max_iterations: 30,
            random_start: true,
            seed,
            ..Default::default()
        };
        let log = run_campaign(plant, &cfg).unwrap();
        for r in log.iterates() {
            n_iter += 1;
            if r.true_constraints[0] + delta_e * kappa > 0.0 {
                bad_iter += 1;
            }
        }
        for r in log.probes() {
            n_probe += 1;
            if r.true_constraints[0] > 0.0 {
                bad_probe += 1;
            }
        }
    }
    report(
        2,
        "back-off soundness",
        bad_iter == 0 && bad_probe == 0,
        format!("{n_iter} iterates with back-off violated {bad_iter} times; {n_probe} probes violated {bad_probe} times"),
    )
}

/// Directional bounds on P-CONV contain the truth on a 41x41 grid of pairs,
/// and beat the lumped bound on at least 10% of pairs where `‖κ̃‖ ≤ κ`.
fn theorem_validity() -> Outcome {
    let plant = plant_by_id("p-conv").unwrap();
    let g = &plant.constraints[0];
    let kappa = LumpedConstant::new(g.oracle_lumped()).unwrap();
    let nodes = BoxDomain::unit(2).grid(41);
    let vals: Vec<f64> = nodes.iter().map(|p| g.value(p.coords())).collect();
    let (mut failures, mut eligible, mut tighter, mut cor2_breaks, mut pairs) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for (ia, a) in nodes.iter().enumerate() {
        let spec = g.oracle_spec_at(a).unwrap();
        let cond = is_directional_tighter(&spec, kappa, Side::Upper).unwrap();
        for (ib, b) in nodes.iter().enumerate() {
            pairs += 1;
            let up = directional_upper_bound(vals[ia], a, b, &spec).unwrap();
            let lo = directional_lower_bound(vals[ia], a, b, &spec).unwrap();
            if vals[ib] > up + 1e-9 || vals[ib] < lo - 1e-9 {
                failures += 1;
            }
            if cond {
                eligible += 1;
                let (_, lumped_up) = lumped_bounds(vals[ia], a, b, kappa).unwrap();
                if up < lumped_up {
                    tighter += 1;
                }
                if up > lumped_up + 1e-9 {
                    cor2_breaks += 1;
                }
            }
        }
    }
    let frac = tighter as f64 / eligible.max(1) as f64;
    report(
        3,
        "directional bound validity",
        failures == 0 && cor2_breaks == 0 && eligible > 0 && frac >= 0.10,
        format!(
            "{pairs} pairs: {failures} containment failures (tol 1e-9); {eligible} pairs with ||k~|| <= k, strictly tighter on {:.1}% (need >= 10%), looser on {cor2_breaks}",
            100.0 * frac
        ),
    )
}

/// Refinement over 1000 noisy realizations: subset, coverage, termination.
fn refinement() -> Outcome {
    let plant = plant_by_id("p-quad").unwrap();
    let f = &plant.cost;
    let spec = f.oracle_spec().lumped_only().unwrap();
    let noise = Normal::new(0.0, DEFAULT_SIGMA).unwrap();
    let w = 3.0 * DEFAULT_SIGMA;
    let (mut not_subset, mut covered, mut total, mut max_passes, mut unconverged) = (0, 0, 0, 0, 0);
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // a wandering sequence of experiments, like an optimizer's iterates and probes
        let mut u: [f64; 2] = [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)];
        let mut data = Vec::new();
        for i in 0..30 {
            for c in &mut u {
                *c = (*c + rng.random_range(-0.06..0.06)).clamp(0.0, 1.0);
            }
            let p = Point::new(u.to_vec()).unwrap();
            let v = f.value(&u) + noise.sample(&mut rng);
            let tag = if i % 3 == 0 { MeasurementTag::MainIterate } else { MeasurementTag::Probe };
            data.push(Measurement::new(p, v, -w, w, tag, i).unwrap());
        }
        let r = refine_bounds(&data, &spec, 1e-6).unwrap();
        max_passes = max_passes.max(r.passes);
        if !(r.max_last_change < 1e-6 && r.passes < 1000) {
            unconverged += 1;
        }
        for (m, b) in data.iter().zip(&r.bounds) {
            let nb = nominal_bounds(m);
            if b.lower < nb.lower || b.upper > nb.upper {
                not_subset += 1;
            }
            total += 1;
            if b.contains(f.value(m.at.coords())) {
                covered += 1;
            }
        }
    }
    let coverage = covered as f64 / total as f64;
    report(
        4,
        "refinement correctness",
        not_subset == 0 && coverage >= 0.99 && unconverged == 0,
        format!(
            "{total} refined intervals: {not_subset} not inside nominal; coverage {:.3}% (need >= 99%); {unconverged} realizations without a fixed point, max {max_passes} passes",
            100.0 * coverage
        ),
    )
}

/// Paired noisy modifier adaptation on P-QUAD with and without trimming.
fn trim_benefit() -> Outcome {
    let plant = plant_by_id("p-quad").unwrap();
    let mut deltas = Vec::new();
    for seed in 0..200 {
        let cfg = CampaignConfig {
            algorithm: Algorithm::Ma,
            guard: GuardMode::Lumped,
            noise: true,
            sigma: DEFAULT_SIGMA,
            max_iterations: 30,
            seed,
            ..Default::default()
        };
        deltas.push(compare_trim(plant, &cfg).unwrap().delta_phi_ave);
    }
    let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
    let positive = deltas.iter().filter(|d| **d > 0.0).count();
    report(
        5,
        "trim benefit",
        mean >= 0.0,
        format!("200 paired realizations: mean dphi_ave = {mean:.5} (need >= 0); {positive} realizations favour trimming"),
    )
}

/// Repair of undersized constants: terminates, consistent, minimal under halving.
fn repair() -> Outcome {
    let (mut inconsistent_after, mut halving_ok, mut triggered) = (0, 0, 0);
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, c) = (rng.random_range(0.5..3.0), rng.random_range(0.5..3.0), rng.random_range(1.0..4.0));
        let f = |u: &[f64]| a * (c * u[0]).sin() + b * u[1] * u[1];
        let n = rng.random_range(8..20);
        let data: Vec<Measurement> = (0..n)
            .map(|i| {
                let u = vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
                let v = f(&u);
                Measurement::exact(Point::new(u).unwrap(), v, i).unwrap()
            })
            .collect();
        // the smallest consistent constant, computed directly from the data
        let mut needed = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = data[i].at.distance(&data[j].at).unwrap();
                needed = needed.max((data[i].value - data[j].value).abs() / d);
            }
        }
        let k0 = needed * rng.random_range(0.05..0.5);
        let inflation = 0.5 * k0;
        let rep = consistency_repair(&LipschitzSpec::lumped(k0).unwrap(), &data, inflation, CheckMode::Exact).unwrap();
        let k = rep.repaired.lumped.unwrap().value();
        if k < needed {
            inconsistent_after += 1;
        }
        if rep.inflation_steps > 0 {
            triggered += 1;
            if k / 2.0 < needed {
                halving_ok += 1;
            }
        }
    }
    report(
        6,
        "consistency repair",
        inconsistent_after == 0 && triggered == 50 && halving_ok == triggered,
        format!(
            "50 datasets: {inconsistent_after} still inconsistent after repair; halving reintroduced a violation on {halving_ok}/{triggered} triggering datasets"
        ),
    )
}

/// Model-based directional estimates against exhaustive grids over `(u, θ)`.
fn estimation() -> Outcome {
    let opts = EstimateOptions::default();
    let (mut cases, mut dominated, mut close) = (0, 0, 0);
    let mut worst = 0.0f64;
    for plant in builtin_plants() {
        for f in std::iter::once(&plant.cost).chain(&plant.constraints) {
            let model = f.model();
            let est = estimate_directional_from_model(model, &plant.domain, &opts).unwrap();
            let us = plant.domain.grid(41);
            let per = if model.param_box().dim() > 0 { 21 } else { 1 };
            let thetas = model.param_box().grid(per);
            let n = plant.dim();
            let (mut lo, mut hi) = (vec![f64::INFINITY; n], vec![f64::NEG_INFINITY; n]);
            for th in &thetas {
                for u in &us {
                    let g = model.gradient(u.coords(), th.coords());
                    for i in 0..n {
                        lo[i] = lo[i].min(g[i]);
                        hi[i] = hi[i].max(g[i]);
                    }
                }
            }
            let truth = f.oracle_spec().directional.as_ref().unwrap();
            for i in 0..n {
                cases += 1;
                if est.lower()[i] <= truth.lower()[i] + 1e-9 && est.upper()[i] >= truth.upper()[i] - 1e-9 {
                    dominated += 1;
                }
                let scale = lo[i].abs().max(hi[i].abs()).max(1e-12);
                let err = ((est.lower()[i] - lo[i]).abs()).max((est.upper()[i] - hi[i]).abs()) / scale;
                worst = worst.max(err);
                if err <= 0.02 {
                    close += 1;
                }
            }
        }
    }
    report(
        7,
        "estimation fidelity",
        dominated == cases && close == cases,
        format!(
            "{cases} coordinate ranges: {dominated} contain the true sensitivity range, {close} within 2% of the grid oracle (worst {:.3}%)",
            100.0 * worst
        ),
    )
}

/// Guarded steepest descent on P-PREM stalls short of the optimum.
fn premature_convergence() -> Outcome {
    let plant = plant_by_id("p-prem").unwrap();
    let cfg = CampaignConfig {
        algorithm: Algorithm::Gd,
        guard: GuardMode::Lumped,
        eta: 0.1,
        max_iterations: 60,
        ..Default::default()
    };
    let log = run_campaign(plant, &cfg).unwrap();
    let last_step = *log.step_norms().last().unwrap();
    let fin = log.final_point();
    let dist = Point::new(fin.to_vec()).unwrap().distance(&plant.optimum).unwrap();
    let gap = plant.true_cost(fin) - plant.optimal_cost;
    let threshold = 0.1;
    report(
        8,
        "premature convergence",
        last_step < 1e-4 && gap > threshold && dist > 0.1 && log.violations == 0,
        format!(
            "stalled at ({:.4}, {:.4}) with last step {last_step:.2e} (need < 1e-4), cost gap {gap:.4} (threshold {threshold}), distance to optimum {dist:.4}",
            fin[0], fin[1]
        ),
    )
}

/// Identical seeds give byte-identical logs and summaries.
fn determinism() -> Outcome {
    let plant = plant_by_id("p-quad").unwrap();
    let render = || {
        let cfg = CampaignConfig {
            algorithm: Algorithm::Ma,
            guard: GuardMode::Lumped,
            noise: true,
            trim: true,
            max_iterations: 30,
            random_start: true,
            seed: 42,
            ..Default::default()
        };
        let pair = compare_trim(plant, &cfg).unwrap();
        let csv = iterates_csv(&[(0, &pair.trimmed)]).unwrap();
        let summary = BatchSummary::from_logs(plant, &[(0, &pair.trimmed)], Some(&[pair.delta_phi_ave]));
        let json = summary_json(&summary).unwrap();
        (csv, json)
    };
    let (a, b) = (render(), render());
    report(
        9,
        "determinism",
        a == b && !a.0.is_empty(),
        format!("two runs with seed 42: {} CSV bytes, identical = {}", a.0.len(), a == b),
    )
}

fn main() {
    // numeric arguments select criteria; cargo's harness flags are ignored
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [fn() -> Outcome; 9] = [
        guard_soundness,
        backoff_soundness,
        theorem_validity,
        refinement,
        trim_benefit,
        repair,
        estimation,
        premature_convergence,
        determinism,
    ];
    let outcomes: Vec<Outcome> = criteria
        .iter()
        .zip(1u32..)
        .filter(|(_, id)| selected.is_empty() || selected.contains(id))
        .map(|(c, _)| c())
        .collect();
    let failed: Vec<&Outcome> = outcomes.iter().filter(|o| !o.pass).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        outcomes.len() - failed.len(),
        outcomes.len()
    );
    if !failed.is_empty() {
        for o in &failed {
            eprintln!("failed criterion {} ({}): {}", o.id, o.name, o.detail);
        }
        std::process::exit(1);
    }
}
