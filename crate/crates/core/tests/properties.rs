use proptest::prelude::*;

use amp_retrain::bayesmix::{bayesmix_aggregate, BimodalFit};
use amp_retrain::glm::{error_from_overlap, optimal_aggregator_sign, GlmParams, Link};
use amp_retrain::gmm::{AggregatorGmm, GmmParams};
use amp_retrain::gmm_se::{error_from_eta, eta_map_ct, eta_map_ft, eta_map_opt};
use amp_retrain::io::{fmt_f64, Table};
use amp_retrain::numerics::{find_root_bisect, normal_cdf};

fn gmm_params() -> impl Strategy<Value = GmmParams> {
    (0.3f64..3.0, 0.1f64..5.0, 0.0f64..0.49, 0.05f64..0.95)
        .prop_map(|(g, a, p, pi)| GmmParams::theory(g, a, p, pi).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixture_aggregators_stay_in_unit_interval(params in gmm_params(), y in -20.0f64..20.0, eta in 0.0f64..5.0, beta in 0.1f64..200.0) {
        for yhat in [-1.0, 1.0] {
            for agg in [
                AggregatorGmm::OptimalGmm { eta },
                AggregatorGmm::SmoothedFullRt { beta },
                AggregatorGmm::SmoothedConsensusRt { beta },
            ] {
                let g = agg.value(y, yhat, &params);
                prop_assert!((-1.0..=1.0).contains(&g));
            }
        }
    }

    #[test]
    fn optimal_aggregator_increasing_in_prediction(params in gmm_params(), y in -5.0f64..5.0, dy in 0.01f64..1.0, eta in 0.0f64..3.0) {
        let agg = AggregatorGmm::OptimalGmm { eta };
        for yhat in [-1.0, 1.0] {
            prop_assert!(agg.value(y + dy, yhat, &params) >= agg.value(y, yhat, &params));
        }
    }

    #[test]
    fn maps_are_finite_and_nonnegative(params in gmm_params(), u in 0.0f64..50.0) {
        for v in [eta_map_opt(u, &params), eta_map_ft(u, &params), eta_map_ct(u, &params)] {
            prop_assert!(v >= -1e-12);
            prop_assert!(v.is_finite());
        }
    }

    #[test]
    fn optimal_map_dominates_hard_rules(params in gmm_params(), u in 0.0f64..10.0) {
        let opt = eta_map_opt(u, &params);
        prop_assert!(opt >= eta_map_ft(u, &params).max(eta_map_ct(u, &params)) - 1e-9);
    }

    #[test]
    fn predicted_error_decreases_with_snr(gamma in 0.1f64..4.0, a in 0.0f64..10.0, b in 0.0f64..10.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(error_from_eta(hi, gamma) <= error_from_eta(lo, gamma));
        prop_assert!(error_from_eta(lo, gamma) <= 0.5);
    }

    #[test]
    fn sign_error_integral_decreasing(r1 in -0.999f64..0.999, r2 in -0.999f64..0.999) {
        let params = GlmParams::theory(1.0, 1.0, 0.2, Link::Sign).unwrap();
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(error_from_overlap(hi, &params) <= error_from_overlap(lo, &params));
    }

    #[test]
    fn sign_aggregator_label_symmetry(u in -10.0f64..10.0, eta in 0.05f64..3.0, alpha in 0.2f64..4.0, p in 0.01f64..0.49) {
        let params = GlmParams::theory(1.0, alpha, p, Link::Sign).unwrap();
        let a = optimal_aggregator_sign(u, 1.0, eta, &params).unwrap();
        let b = optimal_aggregator_sign(-u, -1.0, eta, &params).unwrap();
        prop_assert!((a + b).abs() <= 1e-12 * (1.0 + a.abs()));
        prop_assert!(a.is_finite());
    }

    #[test]
    fn logit_mixture_symmetry_and_bounds(z in -30.0f64..30.0, m in 0.1f64..5.0, s in 0.2f64..3.0, p in 0.01f64..0.5) {
        let fit = BimodalFit::symmetric(m, s);
        for yhat in [-1.0, 1.0] {
            let g = bayesmix_aggregate(z, yhat, &fit, p).unwrap();
            let mirrored = bayesmix_aggregate(-z, -yhat, &fit, p).unwrap();
            prop_assert!((-1.0..=1.0).contains(&g));
            prop_assert!((g + mirrored).abs() <= 1e-12);
        }
    }

    #[test]
    fn logit_mixture_increasing_with_equal_spreads(z in -5.0f64..5.0, dz in 0.001f64..1.0, mp in 0.0f64..3.0, gap in 0.1f64..3.0, s in 0.3f64..3.0, pi in 0.1f64..0.9, p in 0.01f64..0.5) {
        let fit = BimodalFit {
            mu_plus: mp,
            mu_minus: mp - gap,
            sigma_plus: s,
            sigma_minus: s,
            pi_plus: pi,
            ..BimodalFit::symmetric(1.0, 1.0)
        };
        for yhat in [-1.0, 1.0] {
            let a = bayesmix_aggregate(z, yhat, &fit, p).unwrap();
            let b = bayesmix_aggregate(z + dz, yhat, &fit, p).unwrap();
            prop_assert!(b >= a);
        }
    }

    #[test]
    fn bisection_finds_normal_quantiles(q in 0.001f64..0.999) {
        let x = find_root_bisect(|x| normal_cdf(x) - q, -10.0, 10.0, 1e-13).unwrap();
        prop_assert!((normal_cdf(x) - q).abs() <= 1e-12);
    }

    #[test]
    fn table_cells_round_trip(values in proptest::collection::vec(-1e300f64..1e300, 1..20)) {
        let mut t = Table::new("values", &["v"]);
        for v in &values {
            t.push(vec![fmt_f64(*v)]);
        }
        let back = Table::read(t.render().as_bytes()).unwrap();
        let parsed: Vec<f64> = back.rows.iter().map(|(_, r)| r[0].parse().unwrap()).collect();
        prop_assert_eq!(parsed, values);
    }
}
