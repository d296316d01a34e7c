//! Masked evaluation against three-valued ground truth.
//!
//! Ground truth cells hold 1 (match), -1 (no match) or 0 (unknown); unknown
//! cells are dropped before any metric is computed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotationRecord, Verdict};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("no positive labels")]
    NoPositives,
    #[error("empty input")]
    EmptyInput,
    #[error("labels must be +1 or -1, got {0}")]
    InvalidLabel(i8),
    #[error("ground truth values must be in {{-1, 0, 1}}, got {0}")]
    InvalidGroundTruth(i8),
    #[error("item {item} has {found} ratings, expected {expected}")]
    UnequalRaterCounts {
        item: usize,
        expected: u64,
        found: u64,
    },
    #[error("fewer than two raters per item")]
    TooFewRaters,
    #[error("all ratings fall in one category; kappa is undefined")]
    DegenerateAgreement,
}

/// Tweets × articles labels in {1, -1, 0}, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthMatrix {
    tweet_ids: Vec<String>,
    article_ids: Vec<String>,
    values: Vec<i8>,
}

impl GroundTruthMatrix {
    pub fn new(
        tweet_ids: Vec<String>,
        article_ids: Vec<String>,
        values: Vec<i8>,
    ) -> Result<Self, EvalError> {
        let shape = (tweet_ids.len(), article_ids.len());
        if values.len() != shape.0 * shape.1 {
            return Err(EvalError::ShapeMismatch {
                left: shape,
                right: (values.len(), 1),
            });
        }
        if let Some(&bad) = values.iter().find(|v| !matches!(v, -1..=1)) {
            return Err(EvalError::InvalidGroundTruth(bad));
        }
        Ok(GroundTruthMatrix {
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

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.tweet_ids.len(), self.article_ids.len())
    }

    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.values[row * self.article_ids.len() + col]
    }

    pub fn row(&self, row: usize) -> &[i8] {
        let n = self.article_ids.len();
        &self.values[row * n..(row + 1) * n]
    }

    /// Number of labeled (nonzero) cells.
    pub fn n_labeled(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }

    pub fn n_positive(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    /// Restricts the matrix to the given row and column indices, in order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> GroundTruthMatrix {
        let values = rows
            .iter()
            .flat_map(|&r| cols.iter().map(move |&c| self.get(r, c)))
            .collect();
        GroundTruthMatrix {
            tweet_ids: rows.iter().map(|&r| self.tweet_ids[r].clone()).collect(),
            article_ids: cols.iter().map(|&c| self.article_ids[c].clone()).collect(),
            values,
        }
    }
}

/// Flattens `values` (row-major, `shape`) and drops cells whose ground truth
/// is 0.
pub fn masked_pairs<T: Copy>(
    values: &[T],
    shape: (usize, usize),
    gt: &GroundTruthMatrix,
) -> Result<(Vec<T>, Vec<i8>), EvalError> {
    if shape != gt.shape() || values.len() != shape.0 * shape.1 {
        return Err(EvalError::ShapeMismatch {
            left: shape,
            right: gt.shape(),
        });
    }
    Ok(values
        .iter()
        .zip(gt.values())
        .filter(|(_, &g)| g != 0)
        .map(|(&v, &g)| (v, g))
        .unzip())
}

fn check_labels(labels: &[i8]) -> Result<(), EvalError> {
    match labels.iter().find(|&&l| l != 1 && l != -1) {
        Some(&bad) => Err(EvalError::InvalidLabel(bad)),
        None => Ok(()),
    }
}

/// Average precision over a ranked list, with tied scores entering the
/// ranking together: `AP = Σ (R_k − R_{k−1}) · P_k` over tie groups in
/// descending score order.
pub fn average_precision(scores: &[f64], labels: &[i8]) -> Result<f64, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if scores.len() != labels.len() {
        return Err(EvalError::ShapeMismatch {
            left: (scores.len(), 1),
            right: (labels.len(), 1),
        });
    }
    check_labels(labels)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 {
        return Err(EvalError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            tp += usize::from(labels[order[i]] == 1);
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / seen as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Confusion counts with +1 as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn n(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.n())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1_score(self.precision(), self.recall())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Threshold-based metrics for one set of decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n: usize,
    pub confusion: Confusion,
}

pub fn binary_metrics(preds: &[i8], labels: &[i8]) -> Result<BinaryMetrics, EvalError> {
    if preds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if preds.len() != labels.len() {
        return Err(EvalError::ShapeMismatch {
            left: (preds.len(), 1),
            right: (labels.len(), 1),
        });
    }
    check_labels(preds)?;
    check_labels(labels)?;
    let mut c = Confusion::default();
    for (&p, &l) in preds.iter().zip(labels) {
        match (p, l) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fp += 1,
            (_, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    Ok(BinaryMetrics::from(c))
}

impl From<Confusion> for BinaryMetrics {
    fn from(c: Confusion) -> Self {
        BinaryMetrics {
            accuracy: c.accuracy(),
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            n: c.n(),
            confusion: c,
        }
    }
}

/// Full evaluation of a similarity matrix at a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "ap")]
    pub average_precision: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(rename = "n")]
    pub n_evaluated: usize,
}

/// Masked AP on `scores` plus binary metrics of `scores >= threshold`.
pub fn evaluate(
    scores: &[f64],
    shape: (usize, usize),
    gt: &GroundTruthMatrix,
    threshold: f64,
) -> Result<MetricsReport, EvalError> {
    let (flat, labels) = masked_pairs(scores, shape, gt)?;
    let ap = average_precision(&flat, &labels)?;
    let preds: Vec<i8> = flat
        .iter()
        .map(|&s| if s >= threshold { 1 } else { -1 })
        .collect();
    let m = binary_metrics(&preds, &labels)?;
    Ok(MetricsReport {
        average_precision: ap,
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        n_evaluated: m.n,
    })
}

/// Aggregated human judgement for one tweet/article pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Consensus {
    /// Mean of match=1 / no_match=0 over non-skip verdicts; `None` when every
    /// verdict was a skip.
    pub score: Option<f64>,
    pub label: i8,
}

/// Averages annotator verdicts per pair; `score >= threshold` is a match.
pub fn consensus_score(
    records: &[AnnotationRecord],
    threshold: f64,
) -> BTreeMap<(String, String), Consensus> {
    let mut tallies: BTreeMap<(String, String), (usize, usize)> = BTreeMap::new();
    for r in records {
        let entry = tallies
            .entry((r.tweet_id.clone(), r.article_id.clone()))
            .or_default();
        match r.verdict {
            Verdict::Match => {
                entry.0 += 1;
                entry.1 += 1;
            }
            Verdict::NoMatch => entry.1 += 1,
            Verdict::Skip => {}
        }
    }
    tallies
        .into_iter()
        .map(|(key, (matches, votes))| {
            let consensus = if votes == 0 {
                Consensus {
                    score: None,
                    label: 0,
                }
            } else {
                let score = matches as f64 / votes as f64;
                Consensus {
                    score: Some(score),
                    label: if score >= threshold { 1 } else { -1 },
                }
            };
            (key, consensus)
        })
        .collect()
}

/// Fleiss' kappa for a table of per-item category counts (items × categories).
pub fn fleiss_kappa(table: &[Vec<u64>]) -> Result<f64, EvalError> {
    let first = table.first().ok_or(EvalError::EmptyInput)?;
    let raters: u64 = first.iter().sum();
    if raters < 2 {
        return Err(EvalError::TooFewRaters);
    }
    let n_categories = first.len();
    let mut marginals = vec![0u64; n_categories];
    let mut agreement_sum = 0.0;
    for (item, row) in table.iter().enumerate() {
        let found: u64 = row.iter().sum();
        if found != raters || row.len() != n_categories {
            return Err(EvalError::UnequalRaterCounts {
                item,
                expected: raters,
                found,
            });
        }
        let pairs: u64 = row.iter().map(|&c| c * c.saturating_sub(1)).sum();
        agreement_sum += pairs as f64 / (raters * (raters - 1)) as f64;
        for (m, &c) in marginals.iter_mut().zip(row) {
            *m += c;
        }
    }
    if marginals.iter().filter(|&&m| m > 0).count() < 2 {
        return Err(EvalError::DegenerateAgreement);
    }
    let total = (raters * table.len() as u64) as f64;
    let p_bar = agreement_sum / table.len() as f64;
    let p_e: f64 = marginals.iter().map(|&m| (m as f64 / total).powi(2)).sum();
    Ok((p_bar - p_e) / (1.0 - p_e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(rows: usize, cols: usize, values: Vec<i8>) -> GroundTruthMatrix {
        GroundTruthMatrix::new(
            (0..rows).map(|i| format!("t{i}")).collect(),
            (0..cols).map(|i| format!("a{i}")).collect(),
            values,
        )
        .unwrap()
    }

    #[test]
    fn masking_drops_unknown_cells() {
        let g = gt(1, 3, vec![1, 0, -1]);
        let (v, l) = masked_pairs(&[0.9, 0.5, 0.2], (1, 3), &g).unwrap();
        assert_eq!(v, [0.9, 0.2]);
        assert_eq!(l, [1, -1]);

        let zeros = gt(2, 2, vec![0; 4]);
        let (v, l) = masked_pairs(&[0.0; 4], (2, 2), &zeros).unwrap();
        assert!(v.is_empty() && l.is_empty());

        let g23 = gt(2, 3, vec![0; 6]);
        assert!(matches!(
            masked_pairs(&[0.0; 4], (2, 2), &g23),
            Err(EvalError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn ground_truth_rejects_other_values() {
        assert_eq!(
            GroundTruthMatrix::new(vec!["t".into()], vec!["a".into()], vec![2]),
            Err(EvalError::InvalidGroundTruth(2))
        );
    }

    #[test]
    fn average_precision_examples() {
        let ap = average_precision(&[0.9, 0.8, 0.7], &[1, -1, 1]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(
            average_precision(&[0.1, 0.5, 0.3], &[1, 1, 1]).unwrap(),
            1.0
        );
        assert_eq!(
            average_precision(&[0.9, 0.8, 0.2, 0.1], &[1, 1, -1, -1]).unwrap(),
            1.0
        );
        assert_eq!(
            average_precision(&[0.9], &[-1]),
            Err(EvalError::NoPositives)
        );
        assert_eq!(average_precision(&[], &[]), Err(EvalError::EmptyInput));
    }

    #[test]
    fn tied_scores_enter_together() {
        // Ranking order among ties does not matter.
        let a = average_precision(&[0.5, 0.5], &[1, -1]).unwrap();
        let b = average_precision(&[0.5, 0.5], &[-1, 1]).unwrap();
        assert_eq!(a, 0.5);
        assert_eq!(a, b);
    }

    #[test]
    fn reported_table_f1_values() {
        assert!((f1_score(1.0, 0.889) - 0.941).abs() < 5e-4);
        assert!((f1_score(0.638, 0.740) - 0.685).abs() < 5e-4);
    }

    #[test]
    fn zero_predictions_give_zero_scores() {
        let m = binary_metrics(&[-1, -1, -1, -1], &[1, -1, 1, -1]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(binary_metrics(&[], &[]), Err(EvalError::EmptyInput));
        assert_eq!(binary_metrics(&[0], &[1]), Err(EvalError::InvalidLabel(0)));
    }

    #[test]
    fn consensus_examples() {
        let rec = |annotator: &str, article: &str, verdict| AnnotationRecord {
            tweet_id: "t".into(),
            article_id: article.into(),
            annotator_id: annotator.into(),
            verdict,
        };
        let records = vec![
            rec("1", "a1", Verdict::Match),
            rec("2", "a1", Verdict::Match),
            rec("3", "a1", Verdict::NoMatch),
            rec("1", "a2", Verdict::Skip),
            rec("2", "a2", Verdict::Skip),
            rec("1", "a3", Verdict::Match),
            rec("2", "a3", Verdict::NoMatch),
            rec("3", "a3", Verdict::Skip),
        ];
        let c = consensus_score(&records, 0.5);
        let get = |a: &str| c[&("t".to_string(), a.to_string())];
        assert!((get("a1").score.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(get("a1").label, 1);
        assert_eq!(
            get("a2"),
            Consensus {
                score: None,
                label: 0
            }
        );
        assert_eq!(get("a3").score, Some(0.5));
        assert_eq!(get("a3").label, 1);
        assert_eq!(
            consensus_score(&records, 0.6)[&("t".to_string(), "a3".to_string())].label,
            -1
        );
    }

    #[test]
    fn kappa_perfect_and_degenerate() {
        let perfect = vec![vec![3, 0], vec![0, 3], vec![3, 0]];
        assert_eq!(fleiss_kappa(&perfect).unwrap(), 1.0);
        let single = vec![vec![4, 0], vec![4, 0]];
        assert_eq!(fleiss_kappa(&single), Err(EvalError::DegenerateAgreement));
        let unequal = vec![vec![2, 1], vec![1, 1]];
        assert!(matches!(
            fleiss_kappa(&unequal),
            Err(EvalError::UnequalRaterCounts { item: 1, .. })
        ));
        assert_eq!(fleiss_kappa(&[vec![1, 0]]), Err(EvalError::TooFewRaters));
    }

    #[test]
    fn evaluate_counts_only_labeled_cells() {
        let g = gt(2, 2, vec![1, 0, -1, 1]);
        let r = evaluate(&[0.9, 0.1, 0.2, 0.6], (2, 2), &g, 0.5).unwrap();
        assert_eq!(r.n_evaluated, 3);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.average_precision, 1.0);
    }
}
