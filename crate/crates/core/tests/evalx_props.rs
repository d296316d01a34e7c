use proptest::prelude::*;
use tweetlink::evalx::{average_precision, evaluate, GroundTruthMatrix};

fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn instance() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<i8>)> {
    (1usize..10, 1usize..10).prop_flat_map(|(r, c)| {
        (
            Just(r),
            Just(c),
            prop::collection::vec(
                prop_oneof![-1.0f64..1.0, (0i32..5).prop_map(|k| k as f64 / 5.0)],
                r * c,
            ),
            prop::collection::vec(prop_oneof![Just(1i8), Just(-1i8), Just(0i8)], r * c),
        )
            .prop_filter("needs a positive", |(_, _, _, g)| g.contains(&1))
    })
}

proptest! {
    #[test]
    fn ap_invariant_under_monotone_transform((r, c, s, g) in instance()) {
        let gt = GroundTruthMatrix::new(ids("t", r), ids("a", c), g).unwrap();
        let base = evaluate(&s, (r, c), &gt, 0.0).unwrap().average_precision;
        let transformed: Vec<f64> = s.iter().map(|x| (3.0 * x).exp() + 7.0).collect();
        let ap = evaluate(&transformed, (r, c), &gt, 0.0).unwrap().average_precision;
        prop_assert!((ap - base).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn permutation_independent((r, c, s, g) in instance(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let gt = GroundTruthMatrix::new(ids("t", r), ids("a", c), g.clone()).unwrap();
        let base = evaluate(&s, (r, c), &gt, 0.1).unwrap();
        let mut perm: Vec<usize> = (0..r * c).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let s2: Vec<f64> = perm.iter().map(|&i| s[i]).collect();
        let g2: Vec<i8> = perm.iter().map(|&i| g[i]).collect();
        let gt2 = GroundTruthMatrix::new(ids("t", r * c), ids("a", 1), g2).unwrap();
        let other = evaluate(&s2, (r * c, 1), &gt2, 0.1).unwrap();
        prop_assert!((base.average_precision - other.average_precision).abs() < 1e-12);
        prop_assert_eq!(base.accuracy, other.accuracy);
        prop_assert_eq!(base.f1, other.f1);
        prop_assert_eq!(base.n_evaluated, other.n_evaluated);
    }

    #[test]
    fn accuracy_and_count_identities((r, c, s, g) in instance(), theta in -1.0f64..1.0) {
        let gt = GroundTruthMatrix::new(ids("t", r), ids("a", c), g.clone()).unwrap();
        let m = evaluate(&s, (r, c), &gt, theta).unwrap();
        let labeled = g.iter().filter(|&&v| v != 0).count();
        prop_assert_eq!(m.n_evaluated, labeled);
        let correct = s
            .iter()
            .zip(&g)
            .filter(|(_, &l)| l != 0)
            .filter(|(&v, &l)| (v >= theta) == (l == 1))
            .count();
        prop_assert_eq!(m.accuracy, correct as f64 / labeled as f64);
    }

    #[test]
    fn ap_of_perfect_ranking_is_one(pos in 1usize..10, neg in 0usize..10) {
        let mut scores: Vec<f64> = (0..pos).map(|i| 1.0 + i as f64).collect();
        scores.extend((0..neg).map(|i| -(i as f64)));
        let mut labels = vec![1i8; pos];
        labels.extend(vec![-1i8; neg]);
        prop_assert_eq!(average_precision(&scores, &labels).unwrap(), 1.0);
    }
}
