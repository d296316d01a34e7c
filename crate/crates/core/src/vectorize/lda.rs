//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{VectorizeError, Vocabulary};
use crate::persist::Persist;
use crate::rng::seeded;
use crate::textprep::TokenSeq;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaConfig {
    pub k: usize,
    /// Symmetric document-topic prior; `None` means `50 / k`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iters: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            k: 10,
            alpha: None,
            beta: 0.01,
            iters: 200,
            seed: 0,
        }
    }
}

impl LdaConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.k.max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub vocab: Vocabulary,
    /// Topic-word distributions, `k` rows over the vocabulary.
    pub phi: Vec<Vec<f64>>,
    /// Collapsed joint log-likelihood `ln p(w, z)` after each sweep.
    pub log_likelihood: Vec<f64>,
}

impl Persist for LdaModel {
    const FORMAT: &'static str = "tweetlink.lda";
}

/// Sampler state: topic assignments and the three count tables.
struct Counts {
    k: usize,
    v: usize,
    doc_topic: Vec<Vec<usize>>,
    topic_word: Vec<Vec<usize>>,
    topic_total: Vec<usize>,
}

impl Counts {
    fn log_likelihood(&self, alpha: f64, beta: f64) -> f64 {
        let (k, v) = (self.k as f64, self.v as f64);
        let mut ll = k * (ln_gamma(v * beta) - v * ln_gamma(beta));
        for (row, &total) in self.topic_word.iter().zip(&self.topic_total) {
            ll += row.iter().map(|&n| ln_gamma(n as f64 + beta)).sum::<f64>();
            ll -= ln_gamma(total as f64 + v * beta);
        }
        let docs = self.doc_topic.len() as f64;
        ll += docs * (ln_gamma(k * alpha) - k * ln_gamma(alpha));
        for row in &self.doc_topic {
            let len: usize = row.iter().sum();
            ll += row.iter().map(|&n| ln_gamma(n as f64 + alpha)).sum::<f64>();
            ll -= ln_gamma(len as f64 + k * alpha);
        }
        ll
    }
}

/// Draws an index with probability proportional to `weights`.
fn sample_index<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn validate(k: usize, alpha: f64, beta: f64) -> Result<(), VectorizeError> {
    if k < 1 {
        return Err(VectorizeError::DegenerateK);
    }
    if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
        return Err(VectorizeError::InvalidHyperparameter(format!(
            "alpha and beta must be positive, got {alpha} and {beta}"
        )));
    }
    Ok(())
}

impl LdaModel {
    pub fn fit(docs: &[TokenSeq], cfg: &LdaConfig) -> Result<Self, VectorizeError> {
        let (k, alpha, beta) = (cfg.k, cfg.alpha(), cfg.beta);
        validate(k, alpha, beta)?;
        if cfg.iters < 1 {
            return Err(VectorizeError::InvalidHyperparameter(
                "iters must be at least 1".into(),
            ));
        }
        if docs.iter().all(|d| d.is_empty()) {
            return Err(VectorizeError::EmptyCorpus);
        }
        let vocab = Vocabulary::from_docs(docs);
        let v = vocab.len();
        let words: Vec<Vec<usize>> = docs
            .iter()
            .map(|d| {
                d.iter()
                    .map(|t| vocab.get(t).expect("in vocabulary"))
                    .collect()
            })
            .collect();

        let mut rng = seeded(cfg.seed);
        let mut counts = Counts {
            k,
            v,
            doc_topic: vec![vec![0; k]; docs.len()],
            topic_word: vec![vec![0; v]; k],
            topic_total: vec![0; k],
        };
        let mut assignments: Vec<Vec<usize>> = Vec::with_capacity(docs.len());
        for (d, doc) in words.iter().enumerate() {
            let z: Vec<usize> = doc.iter().map(|_| rng.gen_range(0..k)).collect();
            for (&w, &t) in doc.iter().zip(&z) {
                counts.doc_topic[d][t] += 1;
                counts.topic_word[t][w] += 1;
                counts.topic_total[t] += 1;
            }
            assignments.push(z);
        }

        let vbeta = v as f64 * beta;
        let mut weights = vec![0.0; k];
        let mut log_likelihood = Vec::with_capacity(cfg.iters);
        for _ in 0..cfg.iters {
            for (d, doc) in words.iter().enumerate() {
                for (i, &w) in doc.iter().enumerate() {
                    let old = assignments[d][i];
                    counts.doc_topic[d][old] -= 1;
                    counts.topic_word[old][w] -= 1;
                    counts.topic_total[old] -= 1;
                    for (t, weight) in weights.iter_mut().enumerate() {
                        *weight = (counts.doc_topic[d][t] as f64 + alpha)
                            * (counts.topic_word[t][w] as f64 + beta)
                            / (counts.topic_total[t] as f64 + vbeta);
                    }
                    let new = sample_index(&mut rng, &weights);
                    assignments[d][i] = new;
                    counts.doc_topic[d][new] += 1;
                    counts.topic_word[new][w] += 1;
                    counts.topic_total[new] += 1;
                }
            }
            log_likelihood.push(counts.log_likelihood(alpha, beta));
        }

        let phi = counts
            .topic_word
            .iter()
            .zip(&counts.topic_total)
            .map(|(row, &total)| {
                let denom = total as f64 + vbeta;
                row.iter().map(|&n| (n as f64 + beta) / denom).collect()
            })
            .collect();
        Ok(LdaModel {
            k,
            alpha,
            beta,
            seed: cfg.seed,
            vocab,
            phi,
            log_likelihood,
        })
    }

    /// Topic proportions of a new document with `phi` held fixed.
    ///
    /// Runs `iters` fold-in sweeps and averages the smoothed proportions over
    /// the second half. Documents without known words get the prior mean,
    /// the uniform distribution.
    pub fn infer(&self, doc: &TokenSeq, iters: usize, seed: u64) -> Vec<f64> {
        let k = self.k;
        let words: Vec<usize> = doc.iter().filter_map(|t| self.vocab.get(t)).collect();
        if words.is_empty() || k == 1 {
            return vec![1.0 / k as f64; k];
        }
        let mut rng = seeded(seed);
        let mut z: Vec<usize> = words.iter().map(|_| rng.gen_range(0..k)).collect();
        let mut n_dk = vec![0usize; k];
        for &t in &z {
            n_dk[t] += 1;
        }
        let iters = iters.max(1);
        let burn_in = iters / 2;
        let denom = words.len() as f64 + k as f64 * self.alpha;
        let mut theta = vec![0.0; k];
        let mut weights = vec![0.0; k];
        for sweep in 0..iters {
            for (i, &w) in words.iter().enumerate() {
                n_dk[z[i]] -= 1;
                for (t, weight) in weights.iter_mut().enumerate() {
                    *weight = (n_dk[t] as f64 + self.alpha) * self.phi[t][w];
                }
                z[i] = sample_index(&mut rng, &weights);
                n_dk[z[i]] += 1;
            }
            if sweep >= burn_in {
                for (acc, &n) in theta.iter_mut().zip(&n_dk) {
                    *acc += (n as f64 + self.alpha) / denom;
                }
            }
        }
        let total: f64 = theta.iter().sum();
        theta.iter_mut().for_each(|t| *t /= total);
        theta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(texts: &[&str]) -> Vec<TokenSeq> {
        texts.iter().map(|t| TokenSeq::from_whitespace(t)).collect()
    }

    #[test]
    fn single_topic_is_smoothed_unigram() {
        let corpus = docs(&["a a b", "b c"]);
        let cfg = LdaConfig {
            k: 1,
            iters: 3,
            ..LdaConfig::default()
        };
        let m = LdaModel::fit(&corpus, &cfg).unwrap();
        let denom = 5.0 + 3.0 * 0.01;
        let expected = [2.01 / denom, 2.01 / denom, 1.01 / denom];
        for (p, e) in m.phi[0].iter().zip(expected) {
            assert!((p - e).abs() < 1e-15);
        }
        assert_eq!(m.infer(&TokenSeq::from_whitespace("a c"), 10, 1), vec![1.0]);
    }

    #[test]
    fn rows_sum_to_one_and_positive() {
        let corpus = docs(&["a b c d", "c d e f", "a f g"]);
        let cfg = LdaConfig {
            k: 3,
            iters: 20,
            seed: 5,
            ..LdaConfig::default()
        };
        let m = LdaModel::fit(&corpus, &cfg).unwrap();
        for row in &m.phi {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p > 0.0));
        }
        let theta = m.infer(&corpus[0], 20, 3);
        assert!((theta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(theta.iter().all(|&t| t > 0.0));
        assert_eq!(m.log_likelihood.len(), 20);
    }

    #[test]
    fn unknown_document_gets_uniform() {
        let corpus = docs(&["a b", "c d"]);
        let cfg = LdaConfig {
            k: 4,
            iters: 5,
            ..LdaConfig::default()
        };
        let m = LdaModel::fit(&corpus, &cfg).unwrap();
        assert_eq!(
            m.infer(&TokenSeq::from_whitespace("zz yy"), 5, 0),
            vec![0.25; 4]
        );
        assert_eq!(m.infer(&TokenSeq::default(), 5, 0), vec![0.25; 4]);
    }

    #[test]
    fn seeded_fit_is_deterministic() {
        let corpus = docs(&["a b c d", "c d e f", "a f g"]);
        let cfg = LdaConfig {
            k: 2,
            iters: 10,
            seed: 9,
            ..LdaConfig::default()
        };
        let a = LdaModel::fit(&corpus, &cfg).unwrap();
        let b = LdaModel::fit(&corpus, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs() {
        let corpus = docs(&["a"]);
        let bad_k = LdaConfig {
            k: 0,
            ..LdaConfig::default()
        };
        assert!(matches!(
            LdaModel::fit(&corpus, &bad_k),
            Err(VectorizeError::DegenerateK)
        ));
        assert!(matches!(
            LdaModel::fit(&docs(&[""]), &LdaConfig::default()),
            Err(VectorizeError::EmptyCorpus)
        ));
        let bad_beta = LdaConfig {
            beta: 0.0,
            ..LdaConfig::default()
        };
        assert!(matches!(
            LdaModel::fit(&corpus, &bad_beta),
            Err(VectorizeError::InvalidHyperparameter(_))
        ));
    }

    #[test]
    fn default_alpha_follows_k() {
        let cfg = LdaConfig {
            k: 5,
            ..LdaConfig::default()
        };
        assert_eq!(cfg.alpha(), 10.0);
    }
}
