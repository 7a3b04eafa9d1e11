use microt_core::split::{fused_score, score_candidates};
use proptest::prelude::*;

fn profile() -> impl Strategy<Value = (Vec<(usize, f64, u64)>, f64, u64)> {
    (2usize..9)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0u32..=100, n),
                prop::collection::vec(0u64..3000, n),
                1u32..=100,
                0u64..3000,
            )
        })
        .prop_map(|(acc, steps, full, extra)| {
            let mut m = 50;
            let profile = acc
                .iter()
                .zip(&steps)
                .enumerate()
                .map(|(i, (&a, &s))| {
                    m += s;
                    (i + 1, a as f64 / 100.0, m)
                })
                .collect();
            (profile, full as f64 / 100.0, m + extra + 1)
        })
}

proptest! {
    #[test]
    fn optimum_is_a_first_maximum((profile, acc_full, macs_full) in profile()) {
        let r = score_candidates(&profile, acc_full, macs_full).unwrap();
        let scores: Vec<f64> = r.candidates.iter().map(|c| c.fused_score).collect();
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let first = scores.iter().position(|&s| s == best).unwrap();
        prop_assert_eq!(r.optimal_index, profile[first].0);
        prop_assert!(r.optimal_index >= r.candidate_range.0 && r.optimal_index <= r.candidate_range.1);
        for c in &r.candidates {
            for v in [c.gain_norm, c.acc_loss_ratio_norm, c.mac_reduction_ratio_norm] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!((0.0..=1.0).contains(&c.mac_reduction_ratio));
            prop_assert_eq!(c.beats_full, c.accuracy > acc_full);
        }
        prop_assert!(r.candidates.windows(2).all(|w| w[0].macs <= w[1].macs));
    }

    #[test]
    fn fused_score_is_bounded_by_its_largest_argument(x in 0.0..1.0f64, y in 0.0..1.0f64, z in 0.0..1.0f64) {
        let f = fused_score(x, y, z).unwrap();
        prop_assert!(f >= 0.0);
        prop_assert!(f <= x.max(y).max(z) + 1e-12);
    }
}
