use frozen_perc::cli::{parse_grid, parse_range};
use frozen_perc::dist::{phi, ExtendedTime};
use frozen_perc::estimators::{compare, mc_event, Quantity};
use frozen_perc::tree::{format_site_set, parse_site_set, SiteId};
use proptest::prelude::*;

fn extended() -> impl Strategy<Value = ExtendedTime> {
    prop_oneof![
        (0.5f64..=1.0).prop_map(ExtendedTime::Finite),
        Just(ExtendedTime::Infinite),
    ]
}

proptest! {
    #[test]
    fn parsers_never_panic(s in ".{0,40}") {
        let _ = s.parse::<SiteId>();
        let _ = parse_site_set(&s);
        let _ = parse_grid(&s);
        let _ = parse_range(&s);
    }

    #[test]
    fn site_sets_round_trip(text in "[0-2](\\.[01]){0,6}(,[0-2](\\.[01]){0,6}){0,4}") {
        if let Ok(sites) = parse_site_set(&text) {
            prop_assert_eq!(parse_site_set(&format_site_set(&sites)).unwrap(), sites);
        }
    }

    #[test]
    fn kernel_output_is_an_input_or_infinite(a in extended(), b in extended(), u in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let out = phi(lo, hi, u);
        prop_assert!(out == lo || out == hi || out == ExtendedTime::Infinite);
        prop_assert!(out.at_least(u));
    }

    #[test]
    fn kernel_is_monotone_in_activation(a in extended(), b in extended(), u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (u1, u2) = if u <= v { (u, v) } else { (v, u) };
        prop_assert!(phi(lo, hi, u1) <= phi(lo, hi, u2));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reports_are_internally_consistent(seed in any::<u64>(), t in 0.05f64..1.0) {
        let r = mc_event(&Quantity::SingleSiteGreen { t }, 2_000, seed).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.mean));
        prop_assert!(r.ci95[0] <= r.mean && r.mean <= r.ci95[1]);
        prop_assert!(((r.ci95[1] - r.ci95[0]) - 2.0 * 1.96 * r.stderr).abs() < 1e-12);
        let oracle = r.oracle.unwrap();
        if r.stderr > 0.0 {
            prop_assert!((r.z.unwrap() - (r.mean - oracle) / r.stderr).abs() < 1e-9);
        }
        // a looser threshold never turns a pass into a failure
        if compare(&r, 2.0).unwrap() {
            prop_assert!(compare(&r, 4.0).unwrap());
        }
        prop_assert_eq!(r.seed, seed);
    }
}
