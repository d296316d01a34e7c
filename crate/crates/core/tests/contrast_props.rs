use proptest::prelude::*;
use tweetlink::contrast::{
    build_pairs, cosine_embedding_loss, loss_gradient, train, FeatureSet, LongTextStrategy,
    Nonlinearity, TrainConfig,
};

fn vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, dim)
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

proptest! {
    #[test]
    fn loss_nonnegative_and_zero_exactly_when_satisfied(
        (e1, e2) in (1usize..6).prop_flat_map(|d| (vector(d), vector(d))),
        positive in any::<bool>(),
        margin in 0.0f64..0.9,
    ) {
        let y = if positive { 1 } else { -1 };
        let loss = cosine_embedding_loss(&e1, &e2, y, margin).unwrap();
        prop_assert!(loss >= 0.0);
        let c = cos(&e1, &e2);
        prop_assume!(c.is_finite());
        if y == -1 {
            prop_assert_eq!(loss == 0.0, c <= margin);
        } else {
            prop_assert!((loss - (1.0 - c)).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_is_scale_invariant(
        (e1, e2) in (1usize..6).prop_flat_map(|d| (vector(d), vector(d))),
        c in 1e-3f64..1e3,
        positive in any::<bool>(),
    ) {
        let y = if positive { 1 } else { -1 };
        let scaled: Vec<f64> = e1.iter().map(|x| x * c).collect();
        let a = cosine_embedding_loss(&e1, &e2, y, 0.0).unwrap();
        let b = cosine_embedding_loss(&scaled, &e2, y, 0.0).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn gradient_is_orthogonal_to_own_embedding(
        (e1, e2) in (2usize..6).prop_flat_map(|d| (vector(d), vector(d))),
        positive in any::<bool>(),
    ) {
        // Scale invariance means no gradient component along the embedding.
        let y = if positive { 1 } else { -1 };
        let (g1, g2) = loss_gradient(&e1, &e2, y, 0.0).unwrap();
        let d1: f64 = g1.iter().zip(&e1).map(|(g, x)| g * x).sum();
        let d2: f64 = g2.iter().zip(&e2).map(|(g, x)| g * x).sum();
        prop_assert!(d1.abs() < 1e-9 && d2.abs() < 1e-9);
    }

    #[test]
    fn augment_pair_count(lens in prop::collection::vec(1usize..40, 1..5), header in 1usize..8, part in 1usize..8) {
        // Views are header + parts of an article of `len` tokens.
        let mut features = FeatureSet::default();
        let mut positives = Vec::new();
        let mut expected = 0;
        for (i, &len) in lens.iter().enumerate() {
            let views = 1 + len.saturating_sub(header).div_ceil(part);
            expected += views;
            features.tweets.insert(format!("t{i}"), vec![1.0, i as f64]);
            features.articles.insert(format!("a{i}"), vec![vec![0.5, 1.0]; views]);
            positives.push((format!("t{i}"), format!("a{i}")));
        }
        features.articles.insert("spare".into(), vec![vec![1.0, 0.0]]);
        let pairs = build_pairs(&positives, &features, 1.0, 0, LongTextStrategy::Augment).unwrap();
        prop_assert_eq!(pairs.iter().filter(|p| p.y == 1).count(), expected);
        prop_assert_eq!(pairs.iter().filter(|p| p.y == -1).count(), lens.len());
    }
}

#[test]
fn training_is_bitwise_reproducible() {
    let mut features = FeatureSet::default();
    for i in 0..6 {
        let x = i as f64;
        features
            .tweets
            .insert(format!("t{i}"), vec![x.sin(), x.cos(), 0.0, 1.0]);
        features
            .articles
            .insert(format!("a{i}"), vec![vec![x.cos(), x.sin(), 1.0]]);
    }
    let positives: Vec<(String, String)> =
        (0..6).map(|i| (format!("t{i}"), format!("a{i}"))).collect();
    for nonlinearity in [Nonlinearity::None, Nonlinearity::Tanh] {
        let cfg = TrainConfig {
            epochs: 5,
            dim: 6,
            batch_size: 4,
            momentum: 0.5,
            nonlinearity,
            seed: 17,
            ..TrainConfig::default()
        };
        let a = train(&positives, &features, &cfg, LongTextStrategy::Truncate).unwrap();
        let b = train(&positives, &features, &cfg, LongTextStrategy::Truncate).unwrap();
        let bits = |t: &tweetlink::contrast::TrainedEncoder| -> Vec<u64> {
            let m = &t.encoder;
            m.tweet_map
                .weights
                .iter()
                .chain(&m.tweet_map.bias)
                .chain(&m.article_map.weights)
                .chain(&m.article_map.bias)
                .map(|v| v.to_bits())
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }
}
