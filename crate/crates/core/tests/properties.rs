//! Randomized checks of structural invariants. SDP-backed properties use few
//! cases since each case is a solve.

use pepbcd::algos::{build_sequence_tree, run_cacd, run_method, MethodSpec, StepDistribution, StepSchedule};
use pepbcd::analysis::{canonical_relabeling, verify_radius_homogeneity, worst_case_with};
use pepbcd::expr::LipschitzVector;
use pepbcd::pep::{
    assemble_pep, assemble_random_pep, dual_certificate, solve, ConstraintTag, Criterion, Setting, SolverOptions,
};
use proptest::prelude::*;

fn opts() -> SolverOptions {
    SolverOptions::default()
}

fn lipschitz(p: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.25f64..5.0, p)
}

fn order(p: usize, n: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..p, n)
}

fn init_gap(spec: &MethodSpec, l: &LipschitzVector) -> f64 {
    worst_case_with(spec, &Setting::init(1.0), Criterion::FinalValueGap, l, &opts()).unwrap().value().unwrap()
}

proptest! {
    #[test]
    fn interpolation_count((p, ord) in (1usize..4).prop_flat_map(|p| (Just(p), order(p, 4))), kind in 0usize..3) {
        let l = LipschitzVector::uniform(p, 1.0).unwrap();
        let s = StepSchedule::inverse_lipschitz(&l);
        let base = match kind {
            0 => MethodSpec::ccd(p, 1, s),
            1 => MethodSpec::cacd(p, 1, s),
            _ => MethodSpec::am(p, 1),
        }.unwrap();
        let spec = base.with_order(ord).unwrap();
        let prob = assemble_pep(&run_method(&spec).unwrap(), &Setting::init(1.0), Criterion::FinalValueGap, &l).unwrap();
        let n = prob.points.len();
        let count = prob.count_tagged(|t| matches!(t, ConstraintTag::Interpolation { .. }));
        prop_assert_eq!(count, p * n * (n - 1));
    }

    #[test]
    fn relabeling_is_canonical(ord in order(3, 6), perm in Just([0usize, 1, 2]).prop_shuffle()) {
        let c = canonical_relabeling(&ord, 3);
        prop_assert_eq!(canonical_relabeling(&c, 3), c.clone());
        let permuted: Vec<usize> = ord.iter().map(|b| perm[*b]).collect();
        prop_assert_eq!(canonical_relabeling(&permuted, 3), c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn scale_invariance_under_weighted_ball(lv in lipschitz(2), rel in 0.3f64..1.5) {
        let l = LipschitzVector::new(lv).unwrap();
        let unit = LipschitzVector::uniform(2, 1.0).unwrap();
        let scaled = MethodSpec::ccd(2, 1, StepSchedule::relative(&[rel], &l).unwrap()).unwrap();
        let plain = MethodSpec::ccd(2, 1, StepSchedule::relative(&[rel], &unit).unwrap()).unwrap();
        let (a, b) = (init_gap(&scaled, &l), init_gap(&plain, &unit));
        prop_assert!((a - b).abs() <= 1e-6 * b.max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn lower_bound_holds(lv in lipschitz(3), k in 1usize..3) {
        let l = LipschitzVector::new(lv).unwrap();
        let spec = MethodSpec::ccd(3, k, StepSchedule::inverse_lipschitz(&l)).unwrap();
        let lower = 3.0 / (4.0 * (3 * k) as f64 + 2.0);
        prop_assert!(init_gap(&spec, &l) >= lower - 1e-6);
    }

    #[test]
    fn radius_homogeneity(c in 0.3f64..3.0, ord in order(2, 3)) {
        let l = LipschitzVector::uniform(2, 1.0).unwrap();
        let spec = MethodSpec::cacd(2, 1, StepSchedule::inverse_lipschitz(&l)).unwrap().with_order(ord).unwrap();
        let r = verify_radius_homogeneity(&spec, &Setting::init(1.0), &l, c, &opts()).unwrap();
        prop_assert!(r.passed, "{:?}", r);
    }

    #[test]
    fn certificates_match_values(ord in order(2, 3), rel in 0.5f64..1.5) {
        let l = LipschitzVector::uniform(2, 1.0).unwrap();
        let spec = MethodSpec::ccd(2, 1, StepSchedule::relative(&[rel], &l).unwrap()).unwrap().with_order(ord).unwrap();
        let prob = assemble_pep(&run_method(&spec).unwrap(), &Setting::init(1.0), Criterion::FinalValueGap, &l).unwrap();
        let res = solve(&prob, &opts()).unwrap();
        prop_assume!(res.is_optimal());
        let cert = dual_certificate(&res, &prob).unwrap();
        prop_assert!(cert.passed, "{:?}", cert);
    }

    #[test]
    fn degenerate_distribution_is_deterministic(ord in order(2, 3)) {
        let l = LipschitzVector::uniform(2, 1.0).unwrap();
        let schedule = StepSchedule::inverse_lipschitz(&l);
        let rows = ord.iter().map(|b| { let mut r = vec![0.0; 2]; r[*b] = 1.0; r }).collect();
        let tree = build_sequence_tree(2, 3, &schedule, &StepDistribution::per_step(rows).unwrap()).unwrap();
        let random = solve(&assemble_random_pep(&tree, &Setting::init(1.0), Criterion::FinalValueGap, &l).unwrap(), &opts()).unwrap();
        let spec = MethodSpec::cacd(2, 1, schedule).unwrap().with_order(ord).unwrap();
        let fixed = solve(&assemble_pep(&run_cacd(&spec).unwrap(), &Setting::init(1.0), Criterion::FinalValueGap, &l).unwrap(), &opts()).unwrap();
        prop_assume!(random.is_optimal() && fixed.is_optimal());
        prop_assert!((random.value - fixed.value).abs() <= 1e-6, "{} vs {}", random.value, fixed.value);
    }
}
