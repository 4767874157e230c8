mod common;

use nonholo_core::conservation::{noether_sample, CandidateField, ConditionStats};
use nonholo_core::expr::parse;
use nonholo_core::geometry::{lie_bracket, sampling};
use nonholo_core::scenarios::builtin;
use nonholo_core::SymbolTable;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{central_difference, random_expr, random_field};

fn names() -> SymbolTable {
    SymbolTable::for_coordinates(&["x", "y", "z"]).unwrap()
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5..1.5f64, 6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn derivatives_match_finite_differences(seed in any::<u64>(), p in point(), slot in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_expr(&mut rng, 6, 6);
        if let (Ok(exact), Some(fd)) = (e.diff(slot).eval(&p), central_difference(&e, slot, &p, 1e-3)) {
            prop_assert!((exact - fd).abs() <= 1e-6 * exact.abs().max(1.0), "{exact} vs {fd}");
        }
    }

    #[test]
    fn printing_round_trips(seed in any::<u64>(), p in point()) {
        let t = names();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_expr(&mut rng, 6, 6);
        let text = e.to_source(&t);
        let back = parse(&text, &t).unwrap();
        prop_assert_eq!(back.to_source(&t), text.clone());
        match (e.eval(&p), back.eval(&p)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits(), "{}", text),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{text}: {a:?} vs {b:?}"),
        }
    }

    #[test]
    fn brackets_are_antisymmetric_and_satisfy_jacobi(seed in any::<u64>(), q in prop::collection::vec(-1.5..1.5f64, 3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y, z) = (random_field(&mut rng, 3), random_field(&mut rng, 3), random_field(&mut rng, 3));
        let xy = lie_bracket(&x, &y, &q).unwrap();
        let yx = lie_bracket(&y, &x, &q).unwrap();
        prop_assert!((&xy + &yx).amax() <= 1e-12 * (1.0 + xy.amax()));
        let jacobi = x.bracket(&y.bracket(&z)).eval(&q).unwrap()
            + y.bracket(&z.bracket(&x)).eval(&q).unwrap()
            + z.bracket(&x.bracket(&y)).eval(&q).unwrap();
        let scale = 1.0 + x.bracket(&y.bracket(&z)).eval(&q).unwrap().amax();
        prop_assert!(jacobi.amax() <= 1e-12 * scale, "{}", jacobi.amax());
    }

    #[test]
    fn quasi_velocities_round_trip(seed in any::<u64>()) {
        for name in ["nonholonomic_particle", "chaplygin_sleigh", "vertical_rolling_disk", "contact_5d"] {
            let s = builtin(name).unwrap();
            let set = s.off_samples(1, seed).unwrap();
            let state = &set.states[0];
            let local = s.system.local(state).unwrap();
            let v = local.frame.quasi_velocities(&state.u);
            let back = local.frame.reconstruct(&v);
            prop_assert!((&back - &state.u).amax() <= 1e-12 * (1.0 + state.u.amax()));
        }
    }

    #[test]
    fn noether_channels_satisfy_the_linear_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for name in ["nonholonomic_particle", "magnetic_particle", "chaplygin_sleigh"] {
            let s = builtin(name).unwrap();
            let cand = CandidateField::new("z", random_field(&mut rng, 3), None).unwrap();
            let state = &s.samples(1, seed).unwrap().states[0];
            let sample = noether_sample(&s.system, &cand, state).unwrap();
            prop_assert!(sample.identity_defect().abs() <= 1e-12, "{name}: {sample:?}");
        }
    }

    #[test]
    fn condition_stats_are_consistent(r in prop::collection::vec(-1e3..1e3f64, 1..64), tol in 0.0..1e3f64) {
        let s = ConditionStats::from_residuals(&r, tol);
        prop_assert!(s.mean_residual <= s.max_residual + 1e-12);
        prop_assert_eq!(s.verdict.passed(), r.iter().all(|x| x.abs() <= tol));
        prop_assert_eq!(s.count, r.len());
    }

    #[test]
    fn on_constraint_samples_satisfy_the_constraints(seed in any::<u64>()) {
        for name in ["nonholonomic_particle", "vertical_rolling_disk", "contact_5d"] {
            let s = builtin(name).unwrap();
            let set = sampling::on_constraint(s.system.distribution(), &s.domain, 8, seed).unwrap();
            for st in &set.states {
                let m = s.system.membership(st, 1e-12).unwrap();
                prop_assert!(m.on_constraint, "{name}: {}", m.normal_residual);
            }
        }
    }
}
