use icr::icr::update_mu;
use icr::metrics::support_match;
use icr::model::{map_objective, surrogate_objective, IndicatorVector, ProblemInstance};
use icr::oracle::{global_enumeration, ridge_on_support};
use icr::subproblem::{kkt_residual, solve, subproblem_objective, FrozenSet, SubproblemSpec};
use icr::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_instance(seed: u64, q: usize, p: usize, lambda: f64) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = icr::metrics::gaussian_unit_columns(q, p, &mut rng);
    let y = DVector::from_fn(q, |_, _| gaussian(&mut rng));
    let rho = DVector::from_fn(p, |_, _| rng.random_range(1e-3..0.2));
    ProblemInstance::with_penalties(a, y, lambda, rho).unwrap()
}

fn random_weights(seed: u64, p: usize) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    DVector::from_fn(p, |_, _| rng.random_range(0.0..0.5))
}

fn random_frozen(seed: u64, p: usize) -> FrozenSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51ed);
    let mut set = FrozenSet::empty(p);
    for i in 0..p {
        if rng.random_bool(0.2) {
            set.insert(i);
        }
    }
    set
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn solvers_meet_their_certificate(
        seed in any::<u64>(),
        q in 1usize..10,
        p in 1usize..14,
        lambda in prop_oneof![Just(1e-4), 1e-3f64..1.0],
        nonneg in any::<bool>(),
    ) {
        let inst = random_instance(seed, q, p, lambda);
        let weights = random_weights(seed, p);
        let frozen = random_frozen(seed, p);
        let spec = SubproblemSpec::new(&inst, weights.clone(), nonneg).with_frozen(frozen.clone());
        let sol = solve(&spec).unwrap();
        prop_assert!(sol.converged);
        prop_assert!(sol.kkt_residual <= 1e-8);
        let again = kkt_residual(&inst, &weights, &frozen, nonneg, &sol.x);
        prop_assert!((again - sol.kkt_residual).abs() <= 1e-12);
        for i in frozen.indices() {
            prop_assert_eq!(sol.x[i], 0.0);
        }
        if nonneg {
            prop_assert!(sol.x.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn orthonormal_columns_have_closed_form(
        seed in any::<u64>(),
        p in 1usize..8,
        extra in 0usize..4,
        lambda in 1e-3f64..1.0,
        nonneg in any::<bool>(),
    ) {
        let q = p + extra;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(q, p, |_, _| gaussian(&mut rng));
        let a = g.qr().q();
        let y = DVector::from_fn(q, |_, _| gaussian(&mut rng));
        let inst = ProblemInstance::with_penalties(a, y, lambda, DVector::from_element(p, 0.1)).unwrap();
        let w = random_weights(seed, p);
        let sol = solve(&SubproblemSpec::new(&inst, w.clone(), nonneg)).unwrap();
        for i in 0..p {
            let c = inst.aty()[i];
            let t = w[i] / 2.0;
            let expected = if nonneg {
                (c - t).max(0.0)
            } else {
                c.signum() * (c.abs() - t).max(0.0)
            } / (1.0 + lambda);
            prop_assert!((sol.x[i] - expected).abs() <= 1e-8, "i = {}: {} vs {}", i, sol.x[i], expected);
        }
    }

    #[test]
    fn solve_never_regresses_past_warm_start(
        seed in any::<u64>(),
        q in 1usize..8,
        p in 1usize..12,
        nonneg in any::<bool>(),
    ) {
        let inst = random_instance(seed, q, p, 1e-2);
        let w = random_weights(seed, p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let warm = DVector::from_fn(p, |_, _| {
            let v: f64 = gaussian(&mut rng);
            if nonneg { v.abs() } else { v }
        });
        let none = FrozenSet::empty(p);
        let spec = SubproblemSpec::new(&inst, w.clone(), nonneg).with_warm_start(warm.clone());
        let sol = solve(&spec).unwrap();
        let before = subproblem_objective(&inst, &w, &none, &warm);
        let after = subproblem_objective(&inst, &w, &none, &sol.x);
        prop_assert!(after <= before + spec.tol * (1.0 + warm.lp_norm(1)));
    }

    #[test]
    fn recursive_mean_matches_batch_mean(
        xs in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 4), 1..30),
    ) {
        let mut mu = DVector::from_element(4, 123.0);
        for (k, x) in xs.iter().enumerate() {
            mu = update_mu(&mu, &DVector::from_vec(x.clone()), k + 1);
        }
        for i in 0..4 {
            let batch = xs.iter().map(|x| x[i]).sum::<f64>() / xs.len() as f64;
            prop_assert!((mu[i] - batch).abs() <= 1e-12);
        }
    }

    #[test]
    fn surrogate_is_midpoint_convex(
        seed in any::<u64>(),
        q in 1usize..6,
        p in 1usize..8,
    ) {
        let inst = random_instance(seed, q, p, 1e-2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let mut draw = || DVector::from_fn(p, |_, _| gaussian(&mut rng));
        let mu = draw();
        let (a, b) = (draw(), draw());
        let none = FrozenSet::empty(p);
        let f = |x: &DVector<f64>| surrogate_objective(&inst, x, &mu, &none).unwrap();
        let mid = (&a + &b) * 0.5;
        prop_assert!(f(&mid) <= (f(&a) + f(&b)) / 2.0 + 1e-10);
    }

    #[test]
    fn support_match_is_reflexive(v in prop::collection::vec(-1.0f64..1.0, 1..40)) {
        let x = DVector::from_vec(v);
        prop_assert_eq!(support_match(&x, &x, 1e-6), 100.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn enumeration_dominates(
        seed in any::<u64>(),
        q in 2usize..7,
        p in 1usize..8,
    ) {
        let inst = random_instance(seed, q, p, 1e-2);
        let best = global_enumeration(&inst, p).unwrap();
        for mask in 0u32..(1 << p) {
            let support: Vec<usize> = (0..p).filter(|i| mask & (1 << i) != 0).collect();
            let (_, cost) = ridge_on_support(&inst, &support).unwrap();
            prop_assert!(best.cost <= cost);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 11);
        for _ in 0..100 {
            let x = DVector::from_fn(p, |_, _| if rng.random_bool(0.5) { 0.0 } else { gaussian(&mut rng) });
            let cost = map_objective(&inst, &x, &IndicatorVector::support_of(&x)).unwrap();
            prop_assert!(best.cost <= cost);
        }
    }
}
