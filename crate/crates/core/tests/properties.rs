use mcdist::channel::{expected_count, invert_count, peak_time, EnvironmentParams};
use mcdist::crlb::{crlb, uniform_times};
use mcdist::estimators::{moving_max, moving_min};
use proptest::prelude::*;

const UM: f64 = 1e-6;
const MS: f64 = 1e-3;

fn env_strategy() -> impl Strategy<Value = EnvironmentParams> {
    (-3e-3..3e-3f64, 0.0..2e-3f64, 0.0..100.0f64, 0.2..1.0f64).prop_map(|(v_par, v_perp, k, r)| {
        EnvironmentParams {
            v_par,
            v_perp,
            k_degrade: k,
            r_rx: r * UM,
            ..EnvironmentParams::system1(4.0 * UM)
        }
    })
}

proptest! {
    #[test]
    fn inversion_recovers_distance(env in env_strategy(), d in 0.5..15.0f64, t in 0.1..20.0f64) {
        let (d, t) = (d * UM, t * MS);
        let s = expected_count(&env, d, t).unwrap();
        prop_assume!(s > 1e-200);
        let sol = invert_count(&env, s, t).unwrap();
        prop_assert!(
            sol.roots.iter().any(|r| (r - d).abs() <= 1e-6 * d),
            "d = {d}, roots = {:?}", sol.roots
        );
    }

    #[test]
    fn two_roots_straddle_the_drift(env in env_strategy(), d in 0.5..15.0f64, t in 0.1..20.0f64) {
        let (d, t) = (d * UM, t * MS);
        let s = expected_count(&env, d, t).unwrap();
        prop_assume!(s > 1e-200);
        let sol = invert_count(&env, s, t).unwrap();
        if let [a, b] = sol.roots.as_slice() {
            let centre = env.v_par * t;
            prop_assert!(((a + b) / 2.0 - centre).abs() <= 1e-6 * (a.abs() + b.abs()));
        }
    }

    #[test]
    fn count_decreases_with_distance_without_flow(k in 0.0..100.0f64, d in 0.5..15.0f64, t in 0.1..20.0f64) {
        let env = EnvironmentParams { k_degrade: k, ..EnvironmentParams::system1(4.0 * UM) };
        let (d, t) = (d * UM, t * MS);
        let near = expected_count(&env, d, t).unwrap();
        let far = expected_count(&env, d * 1.01, t).unwrap();
        prop_assert!(far <= near);
    }

    #[test]
    fn peak_time_maximizes_count(env in env_strategy(), d in 0.5..15.0f64) {
        let d = d * UM;
        let t = peak_time(&env, d).unwrap();
        let at = expected_count(&env, d, t).unwrap();
        prop_assume!(at > 1e-200);
        for f in [0.9, 0.99, 1.01, 1.1] {
            prop_assert!(expected_count(&env, d, t * f).unwrap() <= at * (1.0 + 1e-12));
        }
    }

    #[test]
    fn peak_time_ignores_flow_direction(env in env_strategy(), d in 0.5..15.0f64) {
        let d = d * UM;
        let t = peak_time(&env, d).unwrap();
        let flipped = env.with_flow(-env.v_perp, env.v_par.abs());
        let t2 = peak_time(&flipped, d).unwrap();
        prop_assert!((t - t2).abs() <= 1e-12 * t);
    }

    #[test]
    fn crlb_scales_inversely_with_emission(env in env_strategy(), d in 1.0..10.0f64, m in 1usize..50) {
        let d = d * UM;
        let times = uniform_times(0.1 * MS, m);
        let a = crlb(&env, d, &times);
        let doubled = EnvironmentParams { n_emitted: 2 * env.n_emitted, ..env };
        if let (Ok(a), Ok(b)) = (a, crlb(&doubled, d, &times)) {
            prop_assert!((a / b - 2.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn envelopes_bracket_the_series(counts in prop::collection::vec(0u32..50, 1..60), half in 0usize..6) {
        let counts: Vec<f64> = counts.into_iter().map(f64::from).collect();
        let w = 2 * half + 1;
        let hi = moving_max(&counts, w).unwrap();
        let lo = moving_min(&counts, w).unwrap();
        for i in 0..counts.len() {
            prop_assert!(lo[i] <= counts[i] && counts[i] <= hi[i]);
        }
    }
}
