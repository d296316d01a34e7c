use std::collections::HashMap;

use proptest::prelude::*;
use tweetlink::evalx::GroundTruthMatrix;
use tweetlink::linker::{
    calibrate_threshold, candidate_thresholds, classify, f1_at, score_matrix, SimilarityMatrix,
};

fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn vectors(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dim), n)
}

fn table(prefix: &str, vs: &[Vec<f64>]) -> HashMap<String, Vec<f64>> {
    ids(prefix, vs.len())
        .into_iter()
        .zip(vs.iter().cloned())
        .collect()
}

/// Similarities with labeled ground truth containing at least one positive.
fn instance() -> impl Strategy<Value = (SimilarityMatrix, GroundTruthMatrix)> {
    (1usize..8, 1usize..8).prop_flat_map(|(r, c)| {
        (
            prop::collection::vec(
                prop_oneof![-1.0f64..1.0, (-4i32..=4).prop_map(|k| k as f64 / 4.0)],
                r * c,
            ),
            prop::collection::vec(prop_oneof![Just(1i8), Just(-1i8), Just(0i8)], r * c),
        )
            .prop_filter("needs a positive", |(_, g)| g.contains(&1))
            .prop_map(move |(s, g)| {
                (
                    SimilarityMatrix::new(ids("t", r), ids("a", c), s).unwrap(),
                    GroundTruthMatrix::new(ids("t", r), ids("a", c), g).unwrap(),
                )
            })
    })
}

proptest! {
    #[test]
    fn scores_stay_in_range(t in vectors(4, 3), a in vectors(3, 3)) {
        let sim = score_matrix(&ids("t", 4), &table("t", &t), &ids("a", 3), &table("a", &a)).unwrap();
        prop_assert!(sim.values().iter().all(|v| (-1.0 - 1e-9..=1.0 + 1e-9).contains(v)));
    }

    #[test]
    fn classify_is_monotone((sim, _) in instance(), lo in -1.0f64..1.0, step in 0.0f64..1.0) {
        let low = classify(&sim, lo);
        let high = classify(&sim, lo + step);
        for (l, h) in low.values.iter().zip(&high.values) {
            prop_assert!(!(*l == -1 && *h == 1));
        }
    }

    #[test]
    fn calibration_is_optimal_and_consistent((sim, gt) in instance()) {
        let cal = calibrate_threshold(&sim, &gt).unwrap();
        prop_assert_eq!(f1_at(&sim, &gt, cal.threshold).unwrap(), cal.f1);
        let (scores, _) = tweetlink::evalx::masked_pairs(sim.values(), sim.shape(), &gt).unwrap();
        for theta in candidate_thresholds(&scores) {
            prop_assert!(f1_at(&sim, &gt, theta).unwrap() <= cal.f1);
        }
    }

    #[test]
    fn rescaling_tweets_keeps_decisions(t in vectors(4, 3), a in vectors(3, 3), c in 0.01f64..100.0, g in prop::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], 12)) {
        prop_assume!(g.contains(&1));
        let gt = GroundTruthMatrix::new(ids("t", 4), ids("a", 3), g).unwrap();
        let scaled: Vec<Vec<f64>> = t.iter().map(|v| v.iter().map(|x| x * c).collect()).collect();
        let s1 = score_matrix(&ids("t", 4), &table("t", &t), &ids("a", 3), &table("a", &a)).unwrap();
        let s2 = score_matrix(&ids("t", 4), &table("t", &scaled), &ids("a", 3), &table("a", &a)).unwrap();
        let d1 = classify(&s1, calibrate_threshold(&s1, &gt).unwrap().threshold);
        let d2 = classify(&s2, calibrate_threshold(&s2, &gt).unwrap().threshold);
        prop_assert_eq!(d1, d2);
    }

    #[test]
    fn matrix_csv_round_trips(values in prop::collection::vec(-1.0f64..1.0, 6)) {
        let sim = SimilarityMatrix::new(ids("t", 2), ids("a", 3), values).unwrap();
        let mut buf = Vec::new();
        sim.write_csv(&mut buf).unwrap();
        prop_assert_eq!(SimilarityMatrix::read_csv(buf.as_slice()).unwrap(), sim);
    }
}
