use approx::assert_relative_eq;
use dsgd_core::bounds::{
    avg_weight_delta, c_lambda, convex_delta, generalization_bound, nonconvex_delta, past_sums, past_sums_direct,
    per_step_envelope, strongly_convex_delta, trace_eps, BoundParams, Regime,
};
use dsgd_core::engine::StepSchedule;
use dsgd_core::stability::aggregate;
use proptest::prelude::*;

fn schedule() -> impl Strategy<Value = StepSchedule> {
    prop_oneof![
        (0.001f64..0.5).prop_map(|eta| StepSchedule::Constant { eta }),
        Just(StepSchedule::InvT),
        (0.5f64..4.0).prop_map(|beta| StepSchedule::InvTBeta { beta }),
    ]
}

fn params() -> impl Strategy<Value = BoundParams> {
    (0.1f64..3.0, 0.1f64..3.0, 1usize..8, 1usize..40, 1usize..300, 0.0f64..0.95, schedule())
        .prop_map(|(l, b, m, n, t, lambda, s)| BoundParams::new(l, b, m, n, t, lambda, s))
}

fn hits(t: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::btree_set(1..=t, 0..t.min(12)).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn recursive_past_sums_match_direct(etas in proptest::collection::vec(0.0f64..1.0, 0..200), lambda in 0.0f64..1.0) {
        let a = past_sums_direct(&etas, lambda);
        let b = past_sums(&etas, lambda);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn convex_delta_grows_with_horizon_and_lambda(p in params(), extra in 1usize..50, dl in 0.0f64..0.04) {
        let base = convex_delta(&p, None).unwrap().delta;
        let longer = convex_delta(&BoundParams { iterations: p.iterations + extra, ..p }, None).unwrap().delta;
        let slower = convex_delta(&BoundParams { lambda: p.lambda + dl, ..p }, None).unwrap().delta;
        prop_assert!(longer >= base * (1.0 - 1e-12));
        prop_assert!(slower >= base * (1.0 - 1e-12));
    }

    #[test]
    fn convex_closed_forms_dominate_direct_sums(p in params()) {
        for rep in [convex_delta(&p, None).unwrap(), avg_weight_delta(&p, None).unwrap()] {
            if let Some(cf) = rep.closed_form {
                prop_assert!(rep.delta <= cf * (1.0 + 1e-12), "{} {} > {}", rep.theorem, rep.delta, cf);
            }
        }
    }

    #[test]
    fn strongly_convex_recovers_convex_as_mu_vanishes(p in params()) {
        let convex = convex_delta(&p, None).unwrap().delta;
        let strong = strongly_convex_delta(&BoundParams { mu: 1e-12, ..p }, None).unwrap().delta;
        prop_assert!((strong - convex).abs() <= 1e-8 * convex);
        let contracted = strongly_convex_delta(&BoundParams { mu: 0.5, ..p }, None).unwrap().delta;
        prop_assert!(contracted <= convex * (1.0 + 1e-12));
    }

    #[test]
    fn nonconvex_dominates_convex(p in params()) {
        let convex = convex_delta(&p, None).unwrap().delta;
        let nonconvex = nonconvex_delta(&p, None).unwrap();
        prop_assert!(nonconvex.overflow || nonconvex.delta >= convex * (1.0 - 1e-12));
    }

    #[test]
    fn envelope_is_consistent_with_cell_eps(p in (0.1f64..3.0, 0.1f64..3.0, 1usize..6, 1usize..20, 1usize..120, 0.0f64..0.9, schedule())
        .prop_map(|(l, b, m, n, t, lambda, s)| BoundParams { mu: 0.05, ..BoundParams::new(l, b, m, n, t, lambda, s) }),
        seed_hits in hits(120))
    {
        let hits: Vec<usize> = seed_hits.into_iter().filter(|&h| h <= p.iterations).collect();
        for regime in [Regime::Convex, Regime::StronglyConvex, Regime::Nonconvex] {
            let env = per_step_envelope(regime, &p, &hits);
            prop_assert_eq!(env.len(), p.iterations + 1);
            prop_assert_eq!(env[0], 0.0);
            let eps = trace_eps(regime, &p, &hits);
            let last = p.lipschitz * env[p.iterations];
            prop_assert!((eps - last).abs() <= 1e-9 * eps.abs().max(1e-300));
            if regime == Regime::Convex {
                prop_assert!(env.windows(2).all(|w| w[1] >= w[0]));
            }
        }
    }

    #[test]
    fn more_hits_never_shrink_the_envelope(p in params(), extra in 1usize..300) {
        let extra = 1 + (extra - 1) % p.iterations;
        let without = trace_eps(Regime::Convex, &p, &[]);
        let with = trace_eps(Regime::Convex, &p, &[extra]);
        prop_assert!(with >= without);
    }

    #[test]
    fn aggregate_ordering(eps in proptest::collection::vec(proptest::collection::vec(0.0f64..10.0, 1..8), 1..6)) {
        let agg = aggregate(eps).unwrap();
        prop_assert!(agg.delta_mean <= agg.rms * (1.0 + 1e-12) + 1e-300);
        prop_assert!(agg.rms <= agg.eps_uniform * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn generalization_shape_monotone(rms in 0.0f64..5.0, more in 0.0f64..5.0, mn in 2usize..10_000, delta in 0.001f64..0.9) {
        let a = generalization_bound(1.0, mn, delta, rms).unwrap();
        let b = generalization_bound(1.0, mn, delta, rms + more).unwrap();
        prop_assert!(b.value >= a.value);
        prop_assert!((a.value - a.sampling_term - a.stability_term).abs() <= 1e-12 * a.value.max(1.0));
    }

    #[test]
    fn c_lambda_bounds_partial_sums(lambda in 0.05f64..0.95, t in 1usize..200) {
        let partial: f64 = (1..=t).map(|q| lambda.powi((t - q) as i32) / (q as f64 + 1.0)).sum();
        prop_assert!(partial <= c_lambda(lambda).unwrap() / (t as f64 + 1.0) * (1.0 + 1e-12));
    }
}

#[test]
fn first_step_convex_value() {
    let p = BoundParams::new(1.0, 1.0, 4, 25, 1, 1.0 / 3.0, StepSchedule::Constant { eta: 0.1 });
    assert_relative_eq!(convex_delta(&p, None).unwrap().delta, 2.0 * 0.1 / 100.0, max_relative = 1e-14);
}
