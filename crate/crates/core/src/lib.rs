//! Tweet to news-article linking.
//!
//! Tweets and articles are embedded into a shared vector space (TF-IDF, LDA
//! topic proportions, externally computed embeddings, or a trained dual
//! encoder), every tweet/article pair is scored with cosine similarity, and
//! the resulting matrix is thresholded and evaluated against three-valued
//! ground truth. Reply/quote cascades can be cut to their oldest members and
//! aggregated into a single similarity row.

pub mod cascade;
pub mod contrast;
pub mod corpus;
pub mod evalx;
pub mod linker;
pub mod persist;
pub mod textprep;
pub mod vectorize;

mod rng;

pub use cascade::{AggregationFn, Cascade};
pub use contrast::{DualEncoder, LongTextStrategy, TrainConfig};
pub use corpus::{DocKind, Document, LinkedPair};
pub use evalx::{GroundTruthMatrix, MetricsReport};
pub use linker::{ClassificationMatrix, SimilarityMatrix};
pub use persist::Persist;
pub use textprep::TokenSeq;
