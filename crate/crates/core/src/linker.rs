//! All-pairs cosine scoring, thresholding and F1-optimal threshold search.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalx::{self, Confusion, EvalError, GroundTruthMatrix};
use crate::vectorize::EmbeddingTable;

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("vector dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("no vector for `{0}`")]
    MissingEmbedding(String),
    #[error("no tweets or no articles to score")]
    EmptyAxis,
    #[error("ground truth has no labeled cells")]
    NoLabeledCells,
    #[error("ground truth has no positive cells")]
    NoPositives,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("matrix csv: {0}")]
    Csv(String),
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, LinkError> {
    if u.len() != v.len() {
        return Err(LinkError::DimMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Anything that can hand out a vector per document id.
pub trait VectorSource {
    fn vector(&self, id: &str) -> Option<&[f64]>;
}

impl VectorSource for HashMap<String, Vec<f64>> {
    fn vector(&self, id: &str) -> Option<&[f64]> {
        self.get(id).map(Vec::as_slice)
    }
}

impl VectorSource for EmbeddingTable {
    fn vector(&self, id: &str) -> Option<&[f64]> {
        self.get(id).ok()
    }
}

/// Tweets × articles cosine similarities, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    tweet_ids: Vec<String>,
    article_ids: Vec<String>,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(
        tweet_ids: Vec<String>,
        article_ids: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self, LinkError> {
        if values.len() != tweet_ids.len() * article_ids.len() {
            return Err(LinkError::Eval(EvalError::ShapeMismatch {
                left: (tweet_ids.len(), article_ids.len()),
                right: (values.len(), 1),
            }));
        }
        Ok(SimilarityMatrix {
            tweet_ids,
            article_ids,
            values,
        })
    }

    pub fn tweet_ids(&self) -> &[String] {
        &self.tweet_ids
    }

    pub fn article_ids(&self) -> &[String] {
        &self.article_ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.tweet_ids.len(), self.article_ids.len())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.article_ids.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.article_ids.len();
        &self.values[row * n..(row + 1) * n]
    }

    /// Writes the matrix as CSV: a header of article ids, then one row per
    /// tweet led by its id. Values use the shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), LinkError> {
        let csv_err = |e: csv::Error| LinkError::Csv(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["tweet_id".to_string()];
        header.extend(self.article_ids.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (i, id) in self.tweet_ids.iter().enumerate() {
            let mut record = vec![id.clone()];
            record.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&record).map_err(csv_err)?;
        }
        w.flush().map_err(|e| LinkError::Csv(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, LinkError> {
        let csv_err = |e: csv::Error| LinkError::Csv(e.to_string());
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(input);
        let header = r.headers().map_err(csv_err)?.clone();
        let article_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut tweet_ids = Vec::new();
        let mut values = Vec::new();
        for record in r.records() {
            let record = record.map_err(csv_err)?;
            tweet_ids.push(record.get(0).unwrap_or_default().to_string());
            for cell in record.iter().skip(1) {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| LinkError::Csv(format!("bad number {cell:?}")))?;
                values.push(v);
            }
        }
        SimilarityMatrix::new(tweet_ids, article_ids, values)
    }
}

fn gather<'a, S: VectorSource + ?Sized>(
    ids: &[String],
    src: &'a S,
) -> Result<Vec<&'a [f64]>, LinkError> {
    ids.iter()
        .map(|id| {
            src.vector(id)
                .ok_or_else(|| LinkError::MissingEmbedding(id.clone()))
        })
        .collect()
}

/// Cosine similarity of every tweet against every article, axes in the
/// given id order.
pub fn score_matrix<T, A>(
    tweet_ids: &[String],
    tweet_vecs: &T,
    article_ids: &[String],
    article_vecs: &A,
) -> Result<SimilarityMatrix, LinkError>
where
    T: VectorSource + ?Sized,
    A: VectorSource + ?Sized,
{
    if tweet_ids.is_empty() || article_ids.is_empty() {
        return Err(LinkError::EmptyAxis);
    }
    let tweets = gather(tweet_ids, tweet_vecs)?;
    let articles = gather(article_ids, article_vecs)?;
    let mut values = Vec::with_capacity(tweets.len() * articles.len());
    for t in &tweets {
        for a in &articles {
            values.push(cosine(t, a)?);
        }
    }
    SimilarityMatrix::new(tweet_ids.to_vec(), article_ids.to_vec(), values)
}

/// Binary decisions in {+1, -1}, same axes as the source similarities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationMatrix {
    pub tweet_ids: Vec<String>,
    pub article_ids: Vec<String>,
    pub values: Vec<i8>,
}

impl ClassificationMatrix {
    pub fn shape(&self) -> (usize, usize) {
        (self.tweet_ids.len(), self.article_ids.len())
    }
}

/// `+1` where `similarity >= threshold`, else `-1`.
pub fn classify(sim: &SimilarityMatrix, threshold: f64) -> ClassificationMatrix {
    ClassificationMatrix {
        tweet_ids: sim.tweet_ids.clone(),
        article_ids: sim.article_ids.clone(),
        values: sim
            .values
            .iter()
            .map(|&v| if v >= threshold { 1 } else { -1 })
            .collect(),
    }
}

/// Offset of the outermost candidate thresholds from the extreme scores.
pub const CALIBRATION_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f64,
    pub f1: f64,
}

/// Every threshold that yields a distinct decision set on the labeled
/// cells, ascending: just below the minimum, the midpoints of consecutive
/// distinct scores, just above the maximum.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let Some((&first, &last)) = distinct.first().zip(distinct.last()) else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(distinct.len() + 1);
    out.push(first - CALIBRATION_EPSILON);
    for pair in distinct.windows(2) {
        let mid = pair[0] + (pair[1] - pair[0]) / 2.0;
        // Adjacent floats can round the midpoint down onto the lower score.
        out.push(if mid > pair[0] { mid } else { pair[1] });
    }
    out.push(last + CALIBRATION_EPSILON);
    out
}

/// Threshold maximizing masked F1; ties go to the smallest threshold.
pub fn calibrate_threshold(
    sim: &SimilarityMatrix,
    gt: &GroundTruthMatrix,
) -> Result<Calibration, LinkError> {
    let (scores, labels) = evalx::masked_pairs(&sim.values, sim.shape(), gt)?;
    if scores.is_empty() {
        return Err(LinkError::NoLabeledCells);
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 {
        return Err(LinkError::NoPositives);
    }
    let n_neg = labels.len() - n_pos;

    // Sweep candidates from the highest down; each step admits one more
    // group of tied scores into the positive predictions.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let candidates = candidate_thresholds(&scores);
    let mut best: Option<(f64, f64)> = None;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut cursor = 0;
    for &theta in candidates.iter().rev() {
        while cursor < order.len() && scores[order[cursor]] >= theta {
            if labels[order[cursor]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            cursor += 1;
        }
        let f1 = Confusion {
            tp,
            fp,
            tn: n_neg - fp,
            fn_: n_pos - tp,
        }
        .f1();
        if best.is_none_or(|(_, best_f1)| f1 >= best_f1) {
            best = Some((theta, f1));
        }
    }
    let (threshold, f1) = best.expect("at least two candidates");
    Ok(Calibration { threshold, f1 })
}

/// Masked F1 of `classify(sim, threshold)`.
pub fn f1_at(
    sim: &SimilarityMatrix,
    gt: &GroundTruthMatrix,
    threshold: f64,
) -> Result<f64, LinkError> {
    let decisions = classify(sim, threshold);
    let (preds, labels) = evalx::masked_pairs(&decisions.values, decisions.shape(), gt)?;
    Ok(evalx::binary_metrics(&preds, &labels)?.f1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn vecs(pairs: &[(&str, Vec<f64>)]) -> HashMap<String, Vec<f64>> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            cosine(&[1.0], &[1.0, 2.0]),
            Err(LinkError::DimMismatch(1, 2))
        ));
    }

    #[test]
    fn score_matrix_examples() {
        let t = vecs(&[("t0", vec![0.3, 0.4])]);
        let a = vecs(&[("a0", vec![0.3, 0.4])]);
        let m = score_matrix(&ids("t", 1), &t, &ids("a", 1), &a).unwrap();
        assert_eq!(m.values(), [1.0]);

        let e = vecs(&[("t0", vec![1.0, 0.0]), ("t1", vec![0.0, 1.0])]);
        let a = vecs(&[("a0", vec![1.0, 0.0]), ("a1", vec![0.0, 1.0])]);
        let m = score_matrix(&ids("t", 2), &e, &ids("a", 2), &a).unwrap();
        assert_eq!(m.values(), [1.0, 0.0, 0.0, 1.0]);

        let missing = score_matrix(&ids("t", 2), &e, &ids("a", 3), &a);
        assert!(matches!(missing, Err(LinkError::MissingEmbedding(id)) if id == "a2"));
        assert!(matches!(
            score_matrix(&[], &e, &ids("a", 1), &a),
            Err(LinkError::EmptyAxis)
        ));
    }

    #[test]
    fn classify_examples() {
        let sim = SimilarityMatrix::new(ids("t", 1), ids("a", 2), vec![0.9, 0.1]).unwrap();
        assert_eq!(classify(&sim, 0.5).values, [1, -1]);
        assert_eq!(classify(&sim, 0.9).values, [1, -1]);
        assert_eq!(classify(&sim, 1.01).values, [-1, -1]);
    }

    #[test]
    fn calibration_worked_example() {
        let sim =
            SimilarityMatrix::new(ids("t", 1), ids("a", 4), vec![0.9, 0.8, 0.2, 0.1]).unwrap();
        let gt = GroundTruthMatrix::new(ids("t", 1), ids("a", 4), vec![1, 1, -1, -1]).unwrap();
        let c = calibrate_threshold(&sim, &gt).unwrap();
        assert!((c.threshold - 0.5).abs() < 1e-12);
        assert_eq!(c.f1, 1.0);
        assert_eq!(f1_at(&sim, &gt, c.threshold).unwrap(), c.f1);
    }

    #[test]
    fn calibration_errors() {
        let sim = SimilarityMatrix::new(ids("t", 1), ids("a", 2), vec![0.9, 0.1]).unwrap();
        let unlabeled = GroundTruthMatrix::new(ids("t", 1), ids("a", 2), vec![0, 0]).unwrap();
        assert!(matches!(
            calibrate_threshold(&sim, &unlabeled),
            Err(LinkError::NoLabeledCells)
        ));
        let negatives = GroundTruthMatrix::new(ids("t", 1), ids("a", 2), vec![-1, -1]).unwrap();
        assert!(matches!(
            calibrate_threshold(&sim, &negatives),
            Err(LinkError::NoPositives)
        ));
    }

    #[test]
    fn ties_prefer_smallest_threshold() {
        // All cells positive: only the lowest candidate reaches F1 = 1.
        let sim = SimilarityMatrix::new(ids("t", 1), ids("a", 2), vec![0.9, 0.1]).unwrap();
        let gt = GroundTruthMatrix::new(ids("t", 1), ids("a", 2), vec![1, 1]).unwrap();
        let c = calibrate_threshold(&sim, &gt).unwrap();
        assert_eq!(c.f1, 1.0);
        assert!((c.threshold - (0.1 - CALIBRATION_EPSILON)).abs() < 1e-15);
    }

    #[test]
    fn candidates_cover_extremes() {
        let c = candidate_thresholds(&[0.5, 0.1, 0.5, 0.3]);
        assert_eq!(c.len(), 4);
        assert!(c[0] < 0.1 && c[3] > 0.5);
        assert!((c[1] - 0.2).abs() < 1e-15 && (c[2] - 0.4).abs() < 1e-15);
        let adjacent = 0.3f64;
        let next = f64::from_bits(adjacent.to_bits() + 1);
        let c = candidate_thresholds(&[adjacent, next]);
        assert!(c[1] > adjacent && c[1] <= next);
    }

    #[test]
    fn csv_round_trip() {
        let sim = SimilarityMatrix::new(
            vec!["t,1".into(), "t2".into()],
            ids("a", 2),
            vec![0.1, -0.25, 1.0 / 3.0, 0.0],
        )
        .unwrap();
        let mut buf = Vec::new();
        sim.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("tweet_id,a0,a1\n\"t,1\",0.1,-0.25\n"));
        assert_eq!(SimilarityMatrix::read_csv(buf.as_slice()).unwrap(), sim);
    }
}
