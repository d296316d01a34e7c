use std::collections::HashSet;

use proptest::prelude::*;
use tweetlink::cascade::{aggregate, build_cascades, cut, score_cascade, AggregationFn};
use tweetlink::corpus::{Document, ParentKind};
use tweetlink::linker::SimilarityMatrix;

const FUNCTIONS: [AggregationFn; 3] = [
    AggregationFn::Mean,
    AggregationFn::Median,
    AggregationFn::Max,
];

/// Random forest: tweet `i` either starts a cascade or answers an earlier
/// tweet; timestamps may tie.
fn forest() -> impl Strategy<Value = Vec<Document>> {
    prop::collection::vec(
        (any::<bool>(), any::<prop::sample::Index>(), 0i64..20),
        1..30,
    )
    .prop_map(|spec| {
        let mut docs: Vec<Document> = Vec::new();
        for (i, (root, parent, dt)) in spec.into_iter().enumerate() {
            let id = format!("t{i:02}");
            if i == 0 || root {
                docs.push(Document::tweet(id, "x", dt));
            } else {
                let p = parent.index(i);
                let time = docs[p].created_at + dt;
                let pid = docs[p].id.clone();
                docs.push(Document::tweet(id, "x", time).with_parent(pid, ParentKind::Reply));
            }
        }
        docs
    })
}

proptest! {
    #[test]
    fn cut_laws(docs in forest()) {
        for c in build_cascades(&docs).unwrap() {
            prop_assert_eq!(cut(&c, c.len()), c.clone());
            for m in 1..=c.len() {
                let big = cut(&c, m);
                for n in 1..=m {
                    let small = cut(&c, n);
                    prop_assert_eq!(small.members(), &big.members()[..n]);
                }
            }
            // Every member's parent appears before it.
            let mut seen = HashSet::new();
            for m in c.members() {
                if let Some(p) = &m.parent_id {
                    prop_assert!(seen.contains(p.as_str()));
                }
                seen.insert(m.tweet_id.as_str());
            }
        }
    }

    #[test]
    fn cascades_partition_the_tweets(docs in forest()) {
        let cascades = build_cascades(&docs).unwrap();
        let mut all = HashSet::new();
        for c in &cascades {
            for id in c.member_ids() {
                prop_assert!(all.insert(id.to_string()), "{} in two cascades", id);
            }
        }
        let input: HashSet<String> = docs.iter().map(|d| d.id.clone()).collect();
        prop_assert_eq!(all, input);
    }

    #[test]
    fn max_mean_min_ordering(rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..8)) {
        let max = aggregate(&rows, AggregationFn::Max).unwrap();
        let mean = aggregate(&rows, AggregationFn::Mean).unwrap();
        let median = aggregate(&rows, AggregationFn::Median).unwrap();
        for j in 0..4 {
            let min = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
            prop_assert!(max[j] >= mean[j] - 1e-12 && mean[j] >= min - 1e-12);
            prop_assert!(median[j] <= max[j] && median[j] >= min);
        }
    }

    #[test]
    fn singleton_cascade_is_root_row(values in prop::collection::vec(-1.0f64..1.0, 6)) {
        let docs = vec![Document::tweet("r", "x", 0), Document::tweet("s", "x", 1)];
        let sim = SimilarityMatrix::new(vec!["r".into(), "s".into()], vec!["a".into(), "b".into(), "c".into()], values).unwrap();
        for c in build_cascades(&docs).unwrap() {
            let row = sim.row(sim.tweet_ids().iter().position(|t| t == c.root_id()).unwrap());
            for f in FUNCTIONS {
                let scored = score_cascade(&c, &sim, f).unwrap();
                prop_assert_eq!(scored.as_slice(), row);
            }
        }
    }
}
