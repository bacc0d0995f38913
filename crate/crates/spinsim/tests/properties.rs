//! Randomized invariants: monotonized tables are certified attractive,
//! shared-event evolution preserves pointwise order, and lattice
//! operations obey their algebraic laws.

use std::collections::BTreeMap;

use proptest::prelude::*;

use spinsim::engine::{couple_translates, evolve_uniformized, sample_events};
use spinsim::lattice::{Configuration, InitialCondition};
use spinsim::rates::{LocalPattern, Model, RateSpec};

/// Force attractiveness onto an arbitrary radius-1 table: birth rates get
/// the running max over sub-neighborhoods, death rates the running min.
fn monotonize(raw: &[f64; 8]) -> RateSpec {
    let neighbors = |code: usize| (code & 0b001) | ((code & 0b100) >> 1);
    let mut table = BTreeMap::new();
    for code in 0..8usize {
        let center = (code >> 1) & 1;
        let mine = neighbors(code);
        let mut value = raw[code];
        for other in 0..8usize {
            if (other >> 1) & 1 != center {
                continue;
            }
            let theirs = neighbors(other);
            if theirs & mine != theirs {
                continue; // only sub-neighborhoods feed the running extremum
            }
            if center == 0 {
                value = value.max(raw[other]);
            } else {
                value = value.min(raw[other]);
            }
        }
        table.insert(LocalPattern::new(code, 1).to_string(), value);
    }
    RateSpec::from_table("monotonized", 1, &table).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn monotonized_tables_are_attractive_and_couplable(
        raw in prop::array::uniform8(0.05f64..4.0),
    ) {
        let spec = monotonize(&raw);
        let report = spec.check_attractive();
        prop_assert!(report.attractive, "violations: {:?}", report.violations);
        let c_max = spec.uniformization_bound().unwrap();
        prop_assert!(spec.check_coupling_monotone(c_max).unwrap().pass());
    }

    #[test]
    fn shared_events_preserve_pointwise_order(
        raw in prop::array::uniform8(0.05f64..4.0),
        upper_bits in prop::collection::vec(any::<bool>(), 12),
        mask_bits in prop::collection::vec(any::<bool>(), 12),
        t in 0.1f64..1.5,
        seed in any::<u64>(),
    ) {
        let spec = monotonize(&raw);
        let (lo, hi) = (0i64, 11i64);
        let upper = Configuration::from_fn(lo, hi, 0, 0, |x| {
            u8::from(upper_bits[(x - lo) as usize])
        }).unwrap();
        // lower = upper with a random subset of occupied sites cleared
        let lower = Configuration::from_fn(lo, hi, 0, 0, |x| {
            let i = (x - lo) as usize;
            u8::from(upper_bits[i] && mask_bits[i])
        }).unwrap();

        let c_max = spec.uniformization_bound().unwrap();
        let events = sample_events(c_max, lo, hi, t, seed);
        let up_t = evolve_uniformized(&spec, &upper, &events).unwrap();
        let low_t = evolve_uniformized(&spec, &lower, &events).unwrap();
        prop_assert!(up_t.dominates_pointwise(&low_t).unwrap(),
            "order broken at {:?}", up_t.first_order_violation(&low_t));
    }

    #[test]
    fn coupled_translates_stay_ordered_for_builtins(
        model_idx in 0usize..4,
        t in 0.1f64..1.0,
        seed in any::<u64>(),
    ) {
        let spec = Model::builtins()[model_idx].build().unwrap();
        let (lo, hi) = (-8i64, 8i64);
        let bar = InitialCondition::Step.realize(lo, hi).unwrap();
        let til = InitialCondition::Step.realize_shifted(lo, hi, -1).unwrap();
        let c_max = spec.uniformization_bound().unwrap();
        let events = sample_events(c_max, lo, hi, t, seed);
        let out = couple_translates(&spec, &[bar, til], &events).unwrap();
        prop_assert!(out[0].dominates_pointwise(&out[1]).unwrap());
    }

    #[test]
    fn suffix_code_matches_bitwise_definition(
        bits in prop::collection::vec(any::<bool>(), 10),
        z in 0i64..6,
        m in 1usize..5,
    ) {
        let cfg = Configuration::from_fn(0, 9, 0, 0, |x| u8::from(bits[x as usize])).unwrap();
        let code = cfg.suffix_code(z, m);
        for j in 0..m {
            let expect = cfg.value(z + j as i64);
            prop_assert_eq!(((code >> j) & 1) as u8, expect);
        }
        prop_assert_eq!(cfg.suffix(z, m).code(), code);
    }

    #[test]
    fn shift_then_unshift_is_identity(
        bits in prop::collection::vec(any::<bool>(), 10),
        dx in -20i64..20,
    ) {
        let cfg = Configuration::from_fn(0, 9, 1, 0, |x| u8::from(bits[x as usize])).unwrap();
        let back = cfg.shift(dx).shift(-dx);
        prop_assert_eq!(back.window(), cfg.window());
        for x in -2..12 {
            prop_assert_eq!(back.value(x), cfg.value(x));
        }
        for x in 0..10 {
            prop_assert_eq!(cfg.shift(dx).value(x + dx), cfg.value(x));
        }
    }

    #[test]
    fn pattern_strings_round_trip(code in 0usize..128, radius in 0usize..4) {
        let code = code & ((1usize << (2 * radius + 1)) - 1);
        let p = LocalPattern::new(code, radius);
        let back = LocalPattern::parse(&p.to_string(), radius).unwrap();
        prop_assert_eq!(back, p);
    }
}
