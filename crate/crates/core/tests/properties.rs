//! Property tests for the invariants of each module.

use lipexp::algorithms::{ModifierState, Subproblem};
use lipexp::bounds::{
    directional_lower_bound, directional_upper_bound, is_directional_tighter, lumped_bounds, lumped_from_directional,
    LumpedConstant, Side,
};
use lipexp::cli::io::Histogram;
use lipexp::estimation::{consistency_repair, fit_local_model, CheckMode, FitForm};
use lipexp::feasibility::{
    guard_step, max_safe_radius, perturbation_backoff, robust_guard_step, robust_perturbation_backoff,
};
use lipexp::plants::{plant_by_id, Func};
use lipexp::uncertainty::{nominal_bounds, refine_bounds, Measurement, MeasurementTag};
use lipexp::{BoxDomain, DirectionalConstants, LipschitzSpec, Point};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pt(c: &[f64]) -> Point {
    Point::new(c.to_vec()).unwrap()
}

fn unit_point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..=1.0f64, n)
}

/// Random directional constants on the unit box with `κ̲ ≤ κ̄`.
fn directional(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    prop::collection::vec((-3.0..3.0f64, 0.0..3.0f64), n)
        .prop_map(|v| v.into_iter().map(|(l, w)| (l, l + w)).unzip())
}

fn dir_spec(lo: &[f64], hi: &[f64]) -> LipschitzSpec {
    LipschitzSpec::directional(DirectionalConstants::new(lo.to_vec(), hi.to_vec(), BoxDomain::unit(lo.len())).unwrap())
}

proptest! {
    #[test]
    fn larger_lumped_constant_never_tightens(
        a in unit_point(3), b in unit_point(3), f in -5.0..5.0f64, k in 0.0..4.0f64, extra in 0.0..4.0f64
    ) {
        let (lo1, hi1) = lumped_bounds(f, &pt(&a), &pt(&b), LumpedConstant::new(k).unwrap()).unwrap();
        let (lo2, hi2) = lumped_bounds(f, &pt(&a), &pt(&b), LumpedConstant::new(k + extra).unwrap()).unwrap();
        prop_assert!(lo2 <= lo1 && hi2 >= hi1);
    }

    #[test]
    fn wider_directional_constants_never_tighten(
        (lo, hi) in directional(3), widen in prop::collection::vec((0.0..2.0f64, 0.0..2.0f64), 3),
        a in unit_point(3), b in unit_point(3), f in -5.0..5.0f64
    ) {
        let lo2: Vec<f64> = lo.iter().zip(&widen).map(|(l, w)| l - w.0).collect();
        let hi2: Vec<f64> = hi.iter().zip(&widen).map(|(h, w)| h + w.1).collect();
        let (s1, s2) = (dir_spec(&lo, &hi), dir_spec(&lo2, &hi2));
        let (a, b) = (pt(&a), pt(&b));
        prop_assert!(directional_upper_bound(f, &a, &b, &s2).unwrap() >= directional_upper_bound(f, &a, &b, &s1).unwrap() - 1e-12);
        prop_assert!(directional_lower_bound(f, &a, &b, &s2).unwrap() <= directional_lower_bound(f, &a, &b, &s1).unwrap() + 1e-12);
    }

    #[test]
    fn symmetric_constants_reduce_to_lumped(
        n in 1usize..5, c in 0.0..3.0f64, seed in any::<u64>(), f in -2.0..2.0f64
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let spec = LipschitzSpec::directional(DirectionalConstants::symmetric(&vec![c; n], BoxDomain::unit(n)).unwrap());
        let k = lumped_from_directional(&spec).unwrap();
        prop_assert!((k.value() - c * (n as f64).sqrt()).abs() <= 1e-12 * (1.0 + k.value()));
        let (a, b) = (pt(&a), pt(&b));
        let (lo, hi) = lumped_bounds(f, &a, &b, k).unwrap();
        prop_assert!(directional_upper_bound(f, &a, &b, &spec).unwrap() <= hi + 1e-12);
        prop_assert!(directional_lower_bound(f, &a, &b, &spec).unwrap() >= lo - 1e-12);
    }

    #[test]
    fn tighter_condition_is_consistent_with_bounds(
        (lo, hi) in directional(2), k in 0.0..6.0f64, a in unit_point(2), b in unit_point(2), f in -2.0..2.0f64
    ) {
        let spec = dir_spec(&lo, &hi);
        let k = LumpedConstant::new(k).unwrap();
        let (a, b) = (pt(&a), pt(&b));
        let (llo, lhi) = lumped_bounds(f, &a, &b, k).unwrap();
        if is_directional_tighter(&spec, k, Side::Upper).unwrap() {
            prop_assert!(directional_upper_bound(f, &a, &b, &spec).unwrap() <= lhi + 1e-12);
        }
        if is_directional_tighter(&spec, k, Side::Lower).unwrap() {
            prop_assert!(directional_lower_bound(f, &a, &b, &spec).unwrap() >= llo - 1e-12);
        }
    }

    #[test]
    fn passing_guard_implies_feasibility_for_linear_constraints(
        w in prop::collection::vec(-2.0..2.0f64, 2), c in -1.0..1.0f64, a in unit_point(2), b in unit_point(2)
    ) {
        let g = |u: &[f64]| w[0] * u[0] + w[1] * u[1] + c;
        prop_assume!(g(&a) <= 0.0);
        let kappa = (w[0] * w[0] + w[1] * w[1]).sqrt();
        let (lo, hi): (Vec<f64>, Vec<f64>) = w.iter().map(|x| (*x, *x)).unzip();
        for spec in [LipschitzSpec::lumped(kappa).unwrap(), dir_spec(&lo, &hi)] {
            let d = guard_step(&[g(&a)], &pt(&a), &pt(&b), &[spec]).unwrap();
            if d.feasible {
                prop_assert!(g(&b) <= 1e-9);
            }
        }
    }

    #[test]
    fn safe_radius_shrinks_with_kappa_and_vanishing_slack(
        g in prop::collection::vec(-1.0..-1e-3f64, 2), k in prop::collection::vec(0.1..5.0f64, 2),
        dk in 0.0..3.0f64, shrink in 0.0..1.0f64, j in 0usize..2
    ) {
        let specs = |k: &[f64]| k.iter().map(|x| LipschitzSpec::lumped(*x).unwrap()).collect::<Vec<_>>();
        let r = max_safe_radius(&g, &specs(&k)).unwrap();
        let mut k2 = k.clone();
        k2[j] += dk;
        prop_assert!(max_safe_radius(&g, &specs(&k2)).unwrap() <= r);
        let mut g2 = g.clone();
        g2[j] *= shrink;
        prop_assert!(max_safe_radius(&g2, &specs(&k)).unwrap() <= r);
    }

    #[test]
    fn robust_forms_reduce_to_exact_forms(
        g in prop::collection::vec(-1.0..0.0f64, 2), a in unit_point(2), b in unit_point(2),
        k in prop::collection::vec(0.1..5.0f64, 2), delta in 0.0..0.2f64
    ) {
        let specs: Vec<LipschitzSpec> = k.iter().map(|x| LipschitzSpec::lumped(*x).unwrap()).collect();
        let (a, b) = (pt(&a), pt(&b));
        prop_assert_eq!(
            guard_step(&g, &a, &b, &specs).unwrap(),
            robust_guard_step(&g, &a, &b, &specs).unwrap()
        );
        let dom = BoxDomain::unit(2);
        prop_assert_eq!(
            perturbation_backoff(&g, &a, &specs, delta, &dom).unwrap(),
            robust_perturbation_backoff(&g, &a, &specs, delta, &dom).unwrap()
        );
    }
}

/// Noisy samples of a linear function with bounded noise.
fn noisy_linear(points: &[Vec<f64>], noise: &[f64], w: f64) -> Vec<Measurement> {
    points
        .iter()
        .zip(noise)
        .enumerate()
        .map(|(i, (p, e))| {
            Measurement::new(pt(p), p[0] - 0.5 * p[1] + e, -w, w, MeasurementTag::Probe, i).unwrap()
        })
        .collect()
}

fn dataset() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (2usize..12).prop_flat_map(|n| {
        (
            prop::collection::vec(unit_point(2), n),
            prop::collection::vec(-0.2..0.2f64, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn refinement_contracts_is_idempotent_and_order_free((points, noise) in dataset(), shift in 0usize..12) {
        let w = 0.2;
        let spec = LipschitzSpec::lumped(1.2).unwrap();
        let data = noisy_linear(&points, &noise, w);
        let r = refine_bounds(&data, &spec, 1e-9).unwrap();
        for (m, b) in data.iter().zip(&r.bounds) {
            let nb = nominal_bounds(m);
            prop_assert!(b.lower >= nb.lower && b.upper <= nb.upper);
            // the truth stays inside: the constant is valid and the noise bounded
            let truth = m.at[0] - 0.5 * m.at[1];
            prop_assert!(b.lower <= truth + 1e-12 && truth <= b.upper + 1e-12);
        }

        // feeding the refined intervals back in changes nothing
        let again: Vec<Measurement> = data
            .iter()
            .zip(&r.bounds)
            .map(|(m, b)| {
                let mid = 0.5 * (b.lower + b.upper);
                Measurement::new(m.at.clone(), mid, mid - b.upper, mid - b.lower, m.tag, m.index).unwrap()
            })
            .collect();
        let r2 = refine_bounds(&again, &spec, 1e-9).unwrap();
        for (b1, b2) in r.bounds.iter().zip(&r2.bounds) {
            prop_assert!((b1.lower - b2.lower).abs() <= 1e-8 && (b1.upper - b2.upper).abs() <= 1e-8);
        }

        let mut rotated = data.clone();
        rotated.rotate_left(shift % data.len());
        let r3 = refine_bounds(&rotated, &spec, 1e-9).unwrap();
        for (i, b) in r3.bounds.iter().enumerate() {
            let orig = &r.bounds[(i + shift % data.len()) % data.len()];
            prop_assert!((b.lower - orig.lower).abs() <= 1e-8 && (b.upper - orig.upper).abs() <= 1e-8);
        }
    }

    #[test]
    fn huge_constants_leave_nominal_intervals((points, noise) in dataset()) {
        let data = noisy_linear(&points, &noise, 0.2);
        let r = refine_bounds(&data, &LipschitzSpec::lumped(1e9).unwrap(), 1e-9).unwrap();
        for (m, b) in data.iter().zip(&r.bounds) {
            let nb = nominal_bounds(m);
            let coincident = data.iter().any(|o| o.index != m.index && o.at == m.at);
            if !coincident {
                prop_assert_eq!((b.lower, b.upper), (nb.lower, nb.upper));
            }
        }
    }

    #[test]
    fn repaired_constants_satisfy_every_pair(
        points in prop::collection::vec(unit_point(2), 2..12),
        values in prop::collection::vec(-3.0..3.0f64, 12),
        k0 in 0.01..2.0f64, inflation in 0.01..1.0f64
    ) {
        let data: Vec<Measurement> = points
            .iter()
            .zip(&values)
            .enumerate()
            .map(|(i, (p, v))| Measurement::exact(pt(p), *v, i).unwrap())
            .collect();
        let rep = consistency_repair(&LipschitzSpec::lumped(k0).unwrap(), &data, inflation, CheckMode::Exact).unwrap();
        let k = rep.repaired.lumped.unwrap().value();
        for a in &data {
            for b in &data {
                let d = a.at.distance(&b.at).unwrap();
                if d > 1e-9 {
                    prop_assert!((a.value - b.value).abs() <= k * d * (1.0 + 1e-12) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn quadratic_fit_recovers_exact_coefficients(
        coef in prop::collection::vec(-2.0..2.0f64, 6), points in prop::collection::vec(unit_point(2), 10..20)
    ) {
        let f = |u: &[f64]| {
            coef[0] + coef[1] * u[0] + coef[2] * u[1] + coef[3] * u[0] * u[0] + coef[4] * u[0] * u[1] + coef[5] * u[1] * u[1]
        };
        let data: Vec<Measurement> =
            points.iter().enumerate().map(|(i, p)| Measurement::exact(pt(p), f(p), i).unwrap()).collect();
        match fit_local_model(&data, FitForm::Quadratic) {
            Ok(m) => {
                for (got, want) in m.nominal().iter().zip(&coef) {
                    prop_assert!((got - want).abs() < 1e-6, "{:?} vs {:?}", m.nominal(), coef);
                }
            }
            // random points may be (nearly) degenerate for a quadratic design
            Err(e) => prop_assert_eq!(e, lipexp::Error::SingularDesign),
        }
    }

    #[test]
    fn bias_filter_converges_geometrically(alpha in 0.05..1.0f64, e in -3.0..3.0f64) {
        let mut s = ModifierState::zero(1, 1, alpha).unwrap();
        let mut prev = (s.eps[0] - e).abs();
        for _ in 0..20 {
            s.update_eps(&[e], &[0.0]);
            let err = (s.eps[0] - e).abs();
            prop_assert!((err - (1.0 - alpha) * prev).abs() <= 1e-12 * (1.0 + prev));
            prev = err;
        }
    }

    #[test]
    fn subproblem_solutions_respect_the_box(target in prop::collection::vec(-2.0..3.0f64, 2), seed in any::<u64>()) {
        let dom = BoxDomain::unit(2);
        let t = target.clone();
        let sp = Subproblem {
            domain: &dom,
            objective: Box::new(move |u: &[f64]| {
                let d = [u[0] - t[0], u[1] - t[1]];
                (d[0] * d[0] + d[1] * d[1], vec![2.0 * d[0], 2.0 * d[1]])
            }),
            constraints: vec![Box::new(|u: &[f64]| (u[0] - u[1] - 0.5, vec![1.0, -1.0]))],
            guard: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = sp.solve(&pt(&[0.2, 0.5]), 3, &mut rng);
        for x in s.u.coords() {
            prop_assert!((0.0..=1.0).contains(x));
        }
    }

    #[test]
    fn noiseless_measure_equals_the_function(u in unit_point(2), seed in any::<u64>()) {
        let plant = plant_by_id("p-quad").unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(seed);
        let mut r2 = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let m1 = plant.measure(Func::Constraint(0), &pt(&u), 0.0, &mut r1, MeasurementTag::MainIterate, 0).unwrap();
        let m2 = plant.measure(Func::Constraint(0), &pt(&u), 0.0, &mut r2, MeasurementTag::MainIterate, 0).unwrap();
        prop_assert_eq!(m1.value, plant.constraints[0].value(&u));
        prop_assert_eq!(m1, m2);
    }

    #[test]
    fn histogram_counts_sum_to_the_sample(values in prop::collection::vec(-1.0..1.0f64, 1..300), bins in 1usize..40) {
        let h = Histogram::of(&values, bins);
        prop_assert_eq!(h.counts.iter().sum::<usize>(), values.len());
        prop_assert_eq!(h.edges.len(), h.counts.len() + 1);
    }
}
