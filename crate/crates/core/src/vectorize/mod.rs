//! Document vectorization: TF-IDF, LDA topic proportions and externally
//! computed embeddings.

pub mod embeddings;
pub mod lda;
pub mod tfidf;

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textprep::TokenSeq;

pub use embeddings::EmbeddingTable;
pub use lda::{LdaConfig, LdaModel};
pub use tfidf::TfidfModel;

#[derive(Debug, Error)]
pub enum VectorizeError {
    #[error("corpus has no nonempty document")]
    EmptyCorpus,
    #[error("topic count must be at least 1")]
    DegenerateK,
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("embedding for `{0}` has a different dimension")]
    DimMismatch(String),
    #[error("duplicate embedding id `{0}`")]
    DuplicateId(String),
    #[error("no embedding for `{0}`")]
    MissingEmbedding(String),
    #[error("malformed line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Dense 0-based index over a sorted term set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_docs<'a, I>(docs: I) -> Self
    where
        I: IntoIterator<Item = &'a TokenSeq>,
    {
        let terms: BTreeSet<&str> = docs
            .into_iter()
            .flat_map(|d| d.iter().map(String::as_str))
            .collect();
        Vocabulary::from(terms.into_iter().map(str::to_string).collect::<Vec<_>>())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(terms: Vec<String>) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { terms, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.terms
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map_or(0.0, |pos| self.entries[pos].1)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_is_sorted_bijection() {
        let docs = [
            TokenSeq::from_whitespace("b a c"),
            TokenSeq::from_whitespace("a d"),
        ];
        let v = Vocabulary::from_docs(&docs);
        assert_eq!(v.terms(), ["a", "b", "c", "d"]);
        for (i, t) in v.terms().iter().enumerate() {
            assert_eq!(v.get(t), Some(i));
        }
        assert_eq!(v.get("zzz"), None);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocabulary>(&json).unwrap(), v);
    }

    #[test]
    fn sparse_vector_access() {
        let v = SparseVector {
            dim: 4,
            entries: vec![(1, 3.0), (3, 4.0)],
        };
        assert_eq!(v.get(3), 4.0);
        assert_eq!(v.get(0), 0.0);
        assert_eq!(v.norm(), 5.0);
        assert_eq!(v.to_dense(), [0.0, 3.0, 0.0, 4.0]);
    }
}
