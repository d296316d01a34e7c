//! Reply/quote cascades: construction, cutting to the oldest members, and
//! aggregation of per-tweet similarity rows.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DocKind, Document};
use crate::linker::SimilarityMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum CascadeError {
    #[error("reply/quote cycle among {0:?}")]
    CycleDetected(Vec<String>),
    #[error("document `{0}` is not a tweet")]
    NotATweet(String),
    #[error("duplicate tweet id `{0}`")]
    DuplicateId(String),
    #[error("nothing to aggregate")]
    EmptyInput,
    #[error("rows have different lengths")]
    RaggedRows,
    #[error("tweet `{0}` is not in the similarity matrix")]
    MissingTweet(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub tweet_id: String,
    pub parent_id: Option<String>,
    pub created_at: i64,
}

/// A rooted tree of tweets.
///
/// Members are stored oldest first, with a parent always ahead of its
/// children, so every prefix is itself a valid cascade.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cascade {
    root_id: String,
    members: Vec<Member>,
}

impl Cascade {
    pub fn root_id(&self) -> &str {
        &self.root_id
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member_ids(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(|m| m.tweet_id.as_str())
    }

    /// `(parent, child)` pairs.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.members
            .iter()
            .filter_map(|m| m.parent_id.as_deref().map(|p| (p, m.tweet_id.as_str())))
    }

    /// Export row: `{"root_id": ..., "member_ids": [...]}`.
    pub fn export(&self) -> CascadeRecord {
        CascadeRecord {
            root_id: self.root_id.clone(),
            member_ids: self.member_ids().map(str::to_string).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeRecord {
    pub root_id: String,
    pub member_ids: Vec<String>,
}

/// Groups tweets into cascades by following parent links down from every
/// root. Tweets whose parent is not in `docs` become roots themselves.
/// Cascades come out in the input order of their roots.
pub fn build_cascades(docs: &[Document]) -> Result<Vec<Cascade>, CascadeError> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, d) in docs.iter().enumerate() {
        if d.kind != DocKind::Tweet {
            return Err(CascadeError::NotATweet(d.id.clone()));
        }
        if index.insert(d.id.as_str(), i).is_some() {
            return Err(CascadeError::DuplicateId(d.id.clone()));
        }
    }

    let mut children: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut roots = Vec::new();
    for (i, d) in docs.iter().enumerate() {
        match d.parent_id() {
            Some(p) => match index.get(p) {
                Some(&parent) => children.entry(parent).or_default().push(i),
                None => {
                    warn!(
                        "tweet `{}` replies to missing `{p}`; promoted to cascade root",
                        d.id
                    );
                    roots.push(i);
                }
            },
            None => roots.push(i),
        }
    }

    let mut visited = vec![false; docs.len()];
    let mut cascades = Vec::with_capacity(roots.len());
    for &root in &roots {
        let mut members = Vec::new();
        let mut frontier = BinaryHeap::new();
        frontier.push(Reverse((
            docs[root].created_at,
            docs[root].id.as_str(),
            root,
        )));
        while let Some(Reverse((_, _, i))) = frontier.pop() {
            visited[i] = true;
            let doc = &docs[i];
            let parent_id = if i == root {
                None
            } else {
                doc.parent_id().map(str::to_string)
            };
            members.push(Member {
                tweet_id: doc.id.clone(),
                parent_id,
                created_at: doc.created_at,
            });
            for &c in children.get(&i).into_iter().flatten() {
                if docs[c].created_at < doc.created_at {
                    warn!(
                        "tweet `{}` is older than its parent `{}`",
                        docs[c].id, doc.id
                    );
                }
                frontier.push(Reverse((docs[c].created_at, docs[c].id.as_str(), c)));
            }
        }
        cascades.push(Cascade {
            root_id: docs[root].id.clone(),
            members,
        });
    }

    let mut stuck: Vec<String> = docs
        .iter()
        .zip(&visited)
        .filter(|(_, &v)| !v)
        .map(|(d, _)| d.id.clone())
        .collect();
    if !stuck.is_empty() {
        stuck.sort();
        return Err(CascadeError::CycleDetected(stuck));
    }
    Ok(cascades)
}

/// The cascade as it looked when it had `n` tweets. `n` below 1 counts as 1.
pub fn cut(c: &Cascade, n: usize) -> Cascade {
    Cascade {
        root_id: c.root_id.clone(),
        members: c.members[..n.clamp(1, c.members.len())].to_vec(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationFn {
    #[default]
    Mean,
    Median,
    Max,
}

/// Element-wise aggregation across equally long rows.
pub fn aggregate<R: AsRef<[f64]>>(rows: &[R], f: AggregationFn) -> Result<Vec<f64>, CascadeError> {
    let first = rows.first().ok_or(CascadeError::EmptyInput)?.as_ref();
    let width = first.len();
    if rows.iter().any(|r| r.as_ref().len() != width) {
        return Err(CascadeError::RaggedRows);
    }
    let n = rows.len();
    let column = |j: usize| rows.iter().map(move |r| r.as_ref()[j]);
    Ok((0..width)
        .map(|j| match f {
            AggregationFn::Mean => column(j).sum::<f64>() / n as f64,
            AggregationFn::Max => column(j).fold(f64::NEG_INFINITY, f64::max),
            AggregationFn::Median => {
                let mut col: Vec<f64> = column(j).collect();
                col.sort_by(f64::total_cmp);
                if n % 2 == 1 {
                    col[n / 2]
                } else {
                    (col[n / 2 - 1] + col[n / 2]) / 2.0
                }
            }
        })
        .collect())
}

/// Aggregated similarity row of a cascade's members.
pub fn score_cascade(
    c: &Cascade,
    sim: &SimilarityMatrix,
    f: AggregationFn,
) -> Result<Vec<f64>, CascadeError> {
    let rows: HashMap<&str, usize> = sim
        .tweet_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let member_rows = c
        .member_ids()
        .map(|id| {
            rows.get(id)
                .map(|&r| sim.row(r))
                .ok_or_else(|| CascadeError::MissingTweet(id.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    aggregate(&member_rows, f)
}
