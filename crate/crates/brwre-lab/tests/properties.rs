use std::collections::BTreeMap;

use brwre_core::rng::RngStream;
use brwre_lab::config::{geometric, IntList};
use brwre_lab::experiments::{median, quantile};
use brwre_lab::stats::{
    chi_square_two_sample, permutation_independence, wilson, Histogram, Reference,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wilson_interval_contains_the_estimate(trials in 1u64..10_000, frac in 0.0f64..=1.0, conf in 0.5f64..0.999) {
        let k = ((trials as f64) * frac).floor() as u64;
        let (lo, hi) = wilson(k, trials, conf);
        let p = k as f64 / trials as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn chi_square_p_is_a_probability(counts in prop::collection::vec(20u32..400, 2..12), shift in 0.0f64..0.5) {
        let mut h = Histogram::new();
        let mut law = BTreeMap::new();
        let total: u32 = counts.iter().sum();
        for (k, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                h.add_unit(k as i64);
            }
            law.insert(k as i64, (c as f64 / total as f64) * (1.0 - shift) + shift / counts.len() as f64);
        }
        let r = chi_square_two_sample(&h, &Reference::Exact(law)).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.p_value));
        prop_assert!(r.statistic >= 0.0);
    }

    #[test]
    fn sample_against_its_own_frequencies_is_accepted(counts in prop::collection::vec(5u32..400, 2..12)) {
        let mut h = Histogram::new();
        for (k, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                h.add_unit(k as i64);
            }
        }
        let r = chi_square_two_sample(&h, &Reference::Exact(h.frequencies())).unwrap();
        prop_assert!(r.statistic.abs() < 1e-9);
        prop_assert!(r.p_value > 0.999);
    }

    #[test]
    fn permutation_p_values_are_valid(seed in any::<u64>(), n in 100usize..300) {
        let mut rng = RngStream::new(seed, 0);
        let pairs: Vec<(f64, f64)> = (0..n).map(|_| ((rng.below(5)) as f64, rng.uniform())).collect();
        let r = permutation_independence(&pairs, 19, &mut RngStream::new(seed, 1)).unwrap();
        prop_assert!(r.p_value >= 1.0 / 20.0 && r.p_value <= 1.0);
        let same: Vec<(f64, f64)> = pairs.iter().map(|p| (p.0, p.0)).collect();
        let s = permutation_independence(&same, 19, &mut RngStream::new(seed, 2)).unwrap();
        prop_assert_eq!(s.p_value, 1.0 / 20.0);
    }

    #[test]
    fn quantiles_stay_within_range(xs in prop::collection::vec(-1e6f64..1e6, 1..50), q in 0.0f64..=1.0) {
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let v = quantile(&xs, q);
        prop_assert!(lo <= v && v <= hi);
        prop_assert!(quantile(&xs, 0.0) <= median(&xs) && median(&xs) <= quantile(&xs, 1.0));
    }

    #[test]
    fn ranges_expand_inclusively(a in -50i64..50, len in 0i64..50) {
        let l: IntList = format!("{a}..{}", a + len).parse().unwrap();
        prop_assert_eq!(l.0.len() as i64, len + 1);
        prop_assert_eq!(l.0.first().copied(), Some(a));
    }

    #[test]
    fn checkpoints_double_and_end_at_horizon(first in 1usize..100, factor in 1usize..300) {
        let last = first * factor;
        let c = geometric(first, last);
        prop_assert_eq!(c.first().copied(), Some(first));
        prop_assert_eq!(c.last().copied(), Some(last));
        prop_assert!(c.windows(2).all(|w| w[0] < w[1] && w[1] <= 2 * w[0]));
    }
}
