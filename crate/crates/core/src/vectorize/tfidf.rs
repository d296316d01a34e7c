use serde::{Deserialize, Serialize};

use super::{SparseVector, VectorizeError, Vocabulary};
use crate::persist::Persist;
use crate::textprep::TokenSeq;

/// Smoothed inverse document frequencies over a fitted vocabulary.
///
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, term weight = raw count × idf,
/// vectors L2-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub vocab: Vocabulary,
    pub idf: Vec<f64>,
    pub n_docs: usize,
}

impl Persist for TfidfModel {
    const FORMAT: &'static str = "tweetlink.tfidf";
}

impl TfidfModel {
    pub fn fit(docs: &[TokenSeq]) -> Result<Self, VectorizeError> {
        if docs.iter().all(|d| d.is_empty()) {
            return Err(VectorizeError::EmptyCorpus);
        }
        let vocab = Vocabulary::from_docs(docs);
        let mut df = vec![0usize; vocab.len()];
        let mut seen = vec![usize::MAX; vocab.len()];
        for (d, doc) in docs.iter().enumerate() {
            for token in doc.iter() {
                let i = vocab.get(token).expect("vocabulary covers the corpus");
                if seen[i] != d {
                    seen[i] = d;
                    df[i] += 1;
                }
            }
        }
        let n = docs.len() as f64;
        let idf = df
            .iter()
            .map(|&f| ((1.0 + n) / (1.0 + f as f64)).ln() + 1.0)
            .collect();
        Ok(TfidfModel {
            vocab,
            idf,
            n_docs: docs.len(),
        })
    }

    pub fn dim(&self) -> usize {
        self.vocab.len()
    }

    pub fn idf_of(&self, term: &str) -> Option<f64> {
        self.vocab.get(term).map(|i| self.idf[i])
    }

    /// Out-of-vocabulary tokens are ignored; an all-OOV document maps to
    /// the zero vector.
    pub fn transform(&self, doc: &TokenSeq) -> SparseVector {
        let mut counts: Vec<(usize, f64)> = Vec::new();
        let mut indices: Vec<usize> = doc.iter().filter_map(|t| self.vocab.get(t)).collect();
        indices.sort_unstable();
        for i in indices {
            match counts.last_mut() {
                Some((last, c)) if *last == i => *c += 1.0,
                _ => counts.push((i, 1.0)),
            }
        }
        for (i, w) in counts.iter_mut() {
            *w *= self.idf[*i];
        }
        let mut v = SparseVector {
            dim: self.dim(),
            entries: counts,
        };
        let norm = v.norm();
        if norm > 0.0 {
            for (_, w) in v.entries.iter_mut() {
                *w /= norm;
            }
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(texts: &[&str]) -> Vec<TokenSeq> {
        texts.iter().map(|t| TokenSeq::from_whitespace(t)).collect()
    }

    #[test]
    fn hand_corpus_idf() {
        let m = TfidfModel::fit(&docs(&["a b", "a c"])).unwrap();
        assert!((m.idf_of("a").unwrap() - 1.0).abs() < 1e-15);
        let expected = (3.0f64 / 2.0).ln() + 1.0;
        assert!((m.idf_of("b").unwrap() - expected).abs() < 1e-15);
        assert!((m.idf_of("b").unwrap() - 1.4055).abs() < 1e-4);
        assert_eq!(m.idf_of("b"), m.idf_of("c"));
    }

    #[test]
    fn hand_corpus_transform() {
        let m = TfidfModel::fit(&docs(&["a b", "a c"])).unwrap();
        let v = m.transform(&TokenSeq::from_whitespace("a b"));
        let a = v.get(m.vocab.get("a").unwrap());
        let b = v.get(m.vocab.get("b").unwrap());
        assert!((a - 0.5797).abs() < 1e-4, "{a}");
        assert!((b - 0.8148).abs() < 1e-4, "{b}");
    }

    #[test]
    fn single_doc_and_empty_corpus() {
        let m = TfidfModel::fit(&docs(&["a"])).unwrap();
        assert_eq!(m.idf_of("a"), Some(1.0));
        assert!(matches!(
            TfidfModel::fit(&[]),
            Err(VectorizeError::EmptyCorpus)
        ));
        assert!(matches!(
            TfidfModel::fit(&docs(&["", " "])),
            Err(VectorizeError::EmptyCorpus)
        ));
    }

    #[test]
    fn oov_and_scaling() {
        let m = TfidfModel::fit(&docs(&["a b", "a c"])).unwrap();
        let zero = m.transform(&TokenSeq::from_whitespace("x y"));
        assert!(zero.entries.is_empty());
        assert_eq!(zero.norm(), 0.0);
        let once = m.transform(&TokenSeq::from_whitespace("a"));
        let twice = m.transform(&TokenSeq::from_whitespace("a a"));
        assert_eq!(once, twice);
    }

    #[test]
    fn persist_round_trip() {
        let m = TfidfModel::fit(&docs(&["a b", "a c"])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tfidf.json");
        m.save(&path).unwrap();
        assert_eq!(TfidfModel::load(&path).unwrap(), m);
        std::fs::write(&path, r#"{"format":"other","version":1,"model":{}}"#).unwrap();
        assert!(matches!(
            TfidfModel::load(&path),
            Err(crate::persist::PersistError::WrongFormat { .. })
        ));
    }
}
