//! Dual encoder trained contrastively with the cosine embedding loss.
//!
//! Two independent maps send tweet features and article features into one
//! joint space. Matching pairs are pulled towards cosine 1, sampled
//! non-matching pairs are pushed to cosine at most `margin`:
//!
//! ```text
//! loss(e1, e2,  1) = 1 - cos(e1, e2)
//! loss(e1, e2, -1) = max(0, cos(e1, e2) - margin)
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::persist::Persist;
use crate::rng::seeded;

#[derive(Debug, Error, PartialEq)]
pub enum ContrastError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("label must be +1 or -1, got {0}")]
    InvalidLabel(i8),
    #[error("no article is available as a negative for tweet `{0}`")]
    NoNegativesAvailable(String),
    #[error("no positive pairs to train on")]
    NoPositives,
    #[error("no features for `{0}`")]
    MissingFeatures(String),
    #[error("article input has no chunks")]
    EmptyChunkList,
    #[error("training diverged: loss became {0}")]
    NonFiniteLoss(f64),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<(), ContrastError> {
    if a.len() != b.len() {
        return Err(ContrastError::DimMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

fn check_label(y: i8) -> Result<(), ContrastError> {
    if y == 1 || y == -1 {
        Ok(())
    } else {
        Err(ContrastError::InvalidLabel(y))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine with the zero-vector convention (0 if either norm is 0), plus the
/// two norms.
fn cosine_parts(e1: &[f64], e2: &[f64]) -> (f64, f64, f64) {
    let (s1, s2) = (dot(e1, e1), dot(e2, e2));
    let (n1, n2) = (s1.sqrt(), s2.sqrt());
    if n1 == 0.0 || n2 == 0.0 {
        return (0.0, n1, n2);
    }
    let cos = (dot(e1, e2) / (s1 * s2).sqrt()).clamp(-1.0, 1.0);
    (cos, n1, n2)
}

pub fn cosine_embedding_loss(
    e1: &[f64],
    e2: &[f64],
    y: i8,
    margin: f64,
) -> Result<f64, ContrastError> {
    check_dims(e1, e2)?;
    check_label(y)?;
    let (cos, _, _) = cosine_parts(e1, e2);
    Ok(if y == 1 {
        1.0 - cos
    } else {
        (cos - margin).max(0.0)
    })
}

/// Gradient of [`cosine_embedding_loss`] with respect to both embeddings.
///
/// Where the loss is flat (inactive hinge, including `cos == margin`) or
/// the cosine is undefined (a zero vector), both gradients are zero.
pub fn loss_gradient(
    e1: &[f64],
    e2: &[f64],
    y: i8,
    margin: f64,
) -> Result<(Vec<f64>, Vec<f64>), ContrastError> {
    check_dims(e1, e2)?;
    check_label(y)?;
    let (cos, n1, n2) = cosine_parts(e1, e2);
    let zeros = || (vec![0.0; e1.len()], vec![0.0; e2.len()]);
    if n1 == 0.0 || n2 == 0.0 {
        return Ok(zeros());
    }
    let sign = if y == 1 {
        -1.0
    } else if cos > margin {
        1.0
    } else {
        return Ok(zeros());
    };
    // d cos / d e1 = e2 / (|e1||e2|) - cos * e1 / |e1|^2, symmetric for e2.
    let inv = 1.0 / (n1 * n2);
    let g1 = e1
        .iter()
        .zip(e2)
        .map(|(a, b)| sign * (b * inv - cos * a / (n1 * n1)))
        .collect();
    let g2 = e2
        .iter()
        .zip(e1)
        .map(|(b, a)| sign * (a * inv - cos * b / (n2 * n2)))
        .collect();
    Ok((g1, g2))
}

/// Negatives per tweet: `round_half_up(ratio × positives)` articles drawn
/// uniformly without replacement from those not positively linked to it.
///
/// Tweets are visited in order of first appearance in `positives`. When a
/// tweet has fewer unlinked articles than requested, all of them are used.
pub fn sample_negatives(
    positives: &[(String, String)],
    articles: &[String],
    ratio: f64,
    seed: u64,
) -> Result<Vec<(String, String)>, ContrastError> {
    let mut order: Vec<&str> = Vec::new();
    let mut linked: HashMap<&str, HashSet<&str>> = HashMap::new();
    for (t, a) in positives {
        linked
            .entry(t.as_str())
            .or_insert_with(|| {
                order.push(t.as_str());
                HashSet::new()
            })
            .insert(a.as_str());
    }
    let mut rng = seeded(seed);
    let mut out = Vec::new();
    for tweet in order {
        let own = &linked[tweet];
        let wanted = (ratio * own.len() as f64 + 0.5).floor() as usize;
        if wanted == 0 {
            continue;
        }
        let pool: Vec<&String> = articles
            .iter()
            .filter(|a| !own.contains(a.as_str()))
            .collect();
        if pool.is_empty() {
            return Err(ContrastError::NoNegativesAvailable(tweet.to_string()));
        }
        let take = wanted.min(pool.len());
        for i in index::sample(&mut rng, pool.len(), take) {
            out.push((tweet.to_string(), pool[i].clone()));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    None,
    #[default]
    Tanh,
}

/// How long articles are presented to the article encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LongTextStrategy {
    /// One feature vector of the truncated text.
    #[default]
    Truncate,
    /// One feature vector per chunk; the embedding is the mean of the
    /// per-chunk outputs.
    MeanChunks,
    /// Header and fixed-size parts, each an extra positive pair in training.
    Augment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Tweet,
    Article,
}

/// `x -> act(W x + b)` with `W` stored row-major (`out_dim × in_dim`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Nonlinearity,
}

impl AffineMap {
    /// Weights and biases drawn uniformly from `(-s, s)`, `s = 1/sqrt(in_dim)`.
    pub fn init<R: Rng>(
        rng: &mut R,
        in_dim: usize,
        out_dim: usize,
        activation: Nonlinearity,
    ) -> Self {
        let s = 1.0 / (in_dim.max(1) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-s..s))
            .collect();
        let bias = (0..out_dim).map(|_| rng.gen_range(-s..s)).collect();
        AffineMap {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ContrastError> {
        if x.len() != self.in_dim {
            return Err(ContrastError::DimMismatch {
                expected: self.in_dim,
                found: x.len(),
            });
        }
        let active: Vec<(usize, f64)> = x
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, v)| v != 0.0)
            .collect();
        Ok((0..self.out_dim)
            .map(|i| {
                let row = &self.weights[i * self.in_dim..(i + 1) * self.in_dim];
                let z = self.bias[i] + active.iter().map(|&(j, v)| row[j] * v).sum::<f64>();
                match self.activation {
                    Nonlinearity::None => z,
                    Nonlinearity::Tanh => z.tanh(),
                }
            })
            .collect())
    }

    /// Adds `d loss / d params` into `grad` given the input, the forward
    /// output and `d loss / d output`.
    fn backward(&self, x: &[f64], out: &[f64], grad_out: &[f64], grad: &mut MapGrad) {
        for i in 0..self.out_dim {
            let gz = match self.activation {
                Nonlinearity::None => grad_out[i],
                Nonlinearity::Tanh => grad_out[i] * (1.0 - out[i] * out[i]),
            };
            if gz == 0.0 {
                continue;
            }
            grad.bias[i] += gz;
            let row = &mut grad.weights[i * self.in_dim..(i + 1) * self.in_dim];
            for (g, &v) in row.iter_mut().zip(x) {
                if v != 0.0 {
                    *g += gz * v;
                }
            }
        }
    }

    fn apply(&mut self, step: &MapGrad, lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(&step.weights) {
            *w -= lr * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&step.bias) {
            *b -= lr * g;
        }
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
struct MapGrad {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl MapGrad {
    fn zeros(map: &AffineMap) -> Self {
        MapGrad {
            weights: vec![0.0; map.weights.len()],
            bias: vec![0.0; map.bias.len()],
        }
    }

    fn reset(&mut self) {
        self.weights.iter_mut().for_each(|v| *v = 0.0);
        self.bias.iter_mut().for_each(|v| *v = 0.0);
    }

    fn scale(&mut self, c: f64) {
        self.weights
            .iter_mut()
            .chain(self.bias.iter_mut())
            .for_each(|v| *v *= c);
    }

    /// `self = momentum * self + g`.
    fn accumulate(&mut self, g: &MapGrad, momentum: f64) {
        for (v, x) in self.weights.iter_mut().zip(&g.weights) {
            *v = momentum * *v + x;
        }
        for (v, x) in self.bias.iter_mut().zip(&g.bias) {
            *v = momentum * *v + x;
        }
    }
}

/// Tweet encoder and article encoder sharing one output dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualEncoder {
    pub tweet_map: AffineMap,
    pub article_map: AffineMap,
}

impl DualEncoder {
    pub fn init(
        seed: u64,
        tweet_dim: usize,
        article_dim: usize,
        dim: usize,
        activation: Nonlinearity,
    ) -> Self {
        let mut rng = seeded(seed);
        let tweet_map = AffineMap::init(&mut rng, tweet_dim, dim, activation);
        let article_map = AffineMap::init(&mut rng, article_dim, dim, activation);
        DualEncoder {
            tweet_map,
            article_map,
        }
    }

    /// Joint-space dimension.
    pub fn dim(&self) -> usize {
        self.tweet_map.out_dim
    }

    pub fn map(&self, side: Side) -> &AffineMap {
        match side {
            Side::Tweet => &self.tweet_map,
            Side::Article => &self.article_map,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tweet_map.is_finite() && self.article_map.is_finite()
    }
}

/// Embeds one document. `inputs` holds a single feature vector for the
/// truncate and augment strategies (only the first is used) and one vector
/// per chunk for `MeanChunks`, whose outputs are averaged.
pub fn encode(
    model: &DualEncoder,
    side: Side,
    inputs: &[Vec<f64>],
    strategy: LongTextStrategy,
) -> Result<Vec<f64>, ContrastError> {
    let map = model.map(side);
    let first = inputs.first().ok_or(ContrastError::EmptyChunkList)?;
    match strategy {
        LongTextStrategy::Truncate | LongTextStrategy::Augment => map.forward(first),
        LongTextStrategy::MeanChunks => {
            let mut acc = vec![0.0; map.out_dim];
            for x in inputs {
                for (a, v) in acc.iter_mut().zip(map.forward(x)?) {
                    *a += v;
                }
            }
            let n = inputs.len() as f64;
            acc.iter_mut().for_each(|a| *a /= n);
            Ok(acc)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Negatives sampled per positive pair.
    pub neg_ratio: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Hinge margin for negative pairs, in `[0, 1)`.
    pub margin: f64,
    pub nonlinearity: Nonlinearity,
    /// Joint embedding dimension.
    pub dim: usize,
    /// Heavy-ball momentum; 0 gives plain gradient descent.
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            neg_ratio: 1.0,
            lr: 0.1,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            margin: 0.0,
            nonlinearity: Nonlinearity::Tanh,
            dim: 64,
            momentum: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ContrastError> {
        let bad = |m: String| Err(ContrastError::InvalidConfig(m));
        if !(self.neg_ratio > 0.0 && self.neg_ratio.is_finite()) {
            return bad(format!(
                "neg_ratio must be positive, got {}",
                self.neg_ratio
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size < 1 || self.dim < 1 {
            return bad("batch_size and dim must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.margin) {
            return bad(format!("margin must be in [0, 1), got {}", self.margin));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        Ok(())
    }
}

/// Feature vectors per document id.
///
/// Every article maps to one or more views: the truncated text for
/// `Truncate`, the chunks for `MeanChunks`, the header followed by the parts
/// for `Augment`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureSet {
    pub tweets: BTreeMap<String, Vec<f64>>,
    pub articles: BTreeMap<String, Vec<Vec<f64>>>,
}

impl FeatureSet {
    fn dims(&self) -> Result<(usize, usize), ContrastError> {
        let tweet_dim = self.tweets.values().next().map_or(0, Vec::len);
        let article_dim = self.articles.values().flatten().next().map_or(0, Vec::len);
        for v in self.tweets.values() {
            if v.len() != tweet_dim {
                return Err(ContrastError::DimMismatch {
                    expected: tweet_dim,
                    found: v.len(),
                });
            }
        }
        for views in self.articles.values() {
            if views.is_empty() {
                return Err(ContrastError::EmptyChunkList);
            }
            for v in views {
                if v.len() != article_dim {
                    return Err(ContrastError::DimMismatch {
                        expected: article_dim,
                        found: v.len(),
                    });
                }
            }
        }
        Ok((tweet_dim, article_dim))
    }
}

/// One training example: a tweet, an article input and a label in {+1, -1}.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair<'a> {
    pub tweet: &'a [f64],
    pub article: ArticleInput<'a>,
    pub y: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArticleInput<'a> {
    Single(&'a [f64]),
    /// Embedded as the mean of the per-view outputs.
    Mean(&'a [Vec<f64>]),
}

/// Expands positive links into labeled pairs according to `strategy` and
/// adds sampled negatives.
pub fn build_pairs<'a>(
    positives: &[(String, String)],
    features: &'a FeatureSet,
    neg_ratio: f64,
    seed: u64,
    strategy: LongTextStrategy,
) -> Result<Vec<TrainingPair<'a>>, ContrastError> {
    let tweet = |id: &str| {
        features
            .tweets
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| ContrastError::MissingFeatures(id.to_string()))
    };
    let views = |id: &str| {
        features
            .articles
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| ContrastError::MissingFeatures(id.to_string()))
    };
    let whole = |views: &'a [Vec<f64>]| match strategy {
        LongTextStrategy::MeanChunks => ArticleInput::Mean(views),
        _ => ArticleInput::Single(&views[0]),
    };

    let mut pairs = Vec::new();
    for (t, a) in positives {
        let (x_t, v) = (tweet(t)?, views(a)?);
        if v.is_empty() {
            return Err(ContrastError::EmptyChunkList);
        }
        match strategy {
            LongTextStrategy::Augment => pairs.extend(v.iter().map(|x| TrainingPair {
                tweet: x_t,
                article: ArticleInput::Single(x),
                y: 1,
            })),
            _ => pairs.push(TrainingPair {
                tweet: x_t,
                article: whole(v),
                y: 1,
            }),
        }
    }
    let article_ids: Vec<String> = features.articles.keys().cloned().collect();
    for (t, a) in sample_negatives(positives, &article_ids, neg_ratio, seed)? {
        let v = views(&a)?;
        pairs.push(TrainingPair {
            tweet: tweet(&t)?,
            article: whole(v),
            y: -1,
        });
    }
    Ok(pairs)
}

/// Encoder together with the configuration that produced it and the mean
/// loss over all training pairs: before training, then after every epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedEncoder {
    pub encoder: DualEncoder,
    pub config: TrainConfig,
    pub strategy: LongTextStrategy,
    pub loss_trace: Vec<f64>,
}

impl Persist for TrainedEncoder {
    const FORMAT: &'static str = "tweetlink.dual_encoder";
}

struct Grads {
    tweet: MapGrad,
    article: MapGrad,
}

impl Grads {
    fn zeros(enc: &DualEncoder) -> Self {
        Grads {
            tweet: MapGrad::zeros(&enc.tweet_map),
            article: MapGrad::zeros(&enc.article_map),
        }
    }
}

/// Adds the gradient of one pair's loss into `grads` and returns the loss.
fn pair_step(
    enc: &DualEncoder,
    pair: &TrainingPair,
    margin: f64,
    grads: Option<&mut Grads>,
) -> Result<f64, ContrastError> {
    let e_t = enc.tweet_map.forward(pair.tweet)?;
    let (e_a, article_outputs) = match &pair.article {
        ArticleInput::Single(x) => {
            let out = enc.article_map.forward(x)?;
            (out.clone(), vec![out])
        }
        ArticleInput::Mean(views) => {
            let outs = views
                .iter()
                .map(|x| enc.article_map.forward(x))
                .collect::<Result<Vec<_>, _>>()?;
            let mean = crate::cascade::aggregate(&outs, crate::cascade::AggregationFn::Mean)
                .map_err(|_| ContrastError::EmptyChunkList)?;
            (mean, outs)
        }
    };
    let loss = cosine_embedding_loss(&e_t, &e_a, pair.y, margin)?;
    if let Some(grads) = grads {
        let (g_t, g_a) = loss_gradient(&e_t, &e_a, pair.y, margin)?;
        enc.tweet_map
            .backward(pair.tweet, &e_t, &g_t, &mut grads.tweet);
        match &pair.article {
            ArticleInput::Single(x) => {
                enc.article_map
                    .backward(x, &article_outputs[0], &g_a, &mut grads.article)
            }
            ArticleInput::Mean(views) => {
                let share: Vec<f64> = g_a.iter().map(|g| g / views.len() as f64).collect();
                for (x, out) in views.iter().zip(&article_outputs) {
                    enc.article_map.backward(x, out, &share, &mut grads.article);
                }
            }
        }
    }
    Ok(loss)
}

/// Mean loss over `pairs`.
pub fn mean_loss(
    enc: &DualEncoder,
    pairs: &[TrainingPair],
    margin: f64,
) -> Result<f64, ContrastError> {
    let mut total = 0.0;
    for p in pairs {
        total += pair_step(enc, p, margin, None)?;
    }
    Ok(total / pairs.len().max(1) as f64)
}

/// Mean loss over `batch` and its gradient with respect to all parameters.
fn batch_gradient(
    enc: &DualEncoder,
    batch: &[&TrainingPair],
    margin: f64,
    grads: &mut Grads,
) -> Result<f64, ContrastError> {
    grads.tweet.reset();
    grads.article.reset();
    let mut total = 0.0;
    for p in batch {
        total += pair_step(enc, p, margin, Some(grads))?;
    }
    let scale = 1.0 / batch.len() as f64;
    grads.tweet.scale(scale);
    grads.article.scale(scale);
    Ok(total * scale)
}

/// Trains a dual encoder by mini-batch gradient descent on the mean cosine
/// embedding loss. Same inputs and seed give bitwise-identical parameters.
pub fn train(
    positives: &[(String, String)],
    features: &FeatureSet,
    cfg: &TrainConfig,
    strategy: LongTextStrategy,
) -> Result<TrainedEncoder, ContrastError> {
    cfg.validate()?;
    if positives.is_empty() {
        return Err(ContrastError::NoPositives);
    }
    let (tweet_dim, article_dim) = features.dims()?;
    let mut encoder =
        DualEncoder::init(cfg.seed, tweet_dim, article_dim, cfg.dim, cfg.nonlinearity);
    let pairs = build_pairs(positives, features, cfg.neg_ratio, cfg.seed, strategy)?;

    let mut rng = seeded(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut grads = Grads::zeros(&encoder);
    let mut velocity = Grads::zeros(&encoder);
    let mut loss_trace = Vec::with_capacity(cfg.epochs + 1);
    let initial = mean_loss(&encoder, &pairs, cfg.margin)?;
    if !initial.is_finite() {
        return Err(ContrastError::NonFiniteLoss(initial));
    }
    loss_trace.push(initial);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainingPair> = chunk.iter().map(|&i| &pairs[i]).collect();
            let loss = batch_gradient(&encoder, &batch, cfg.margin, &mut grads)?;
            if !loss.is_finite() {
                return Err(ContrastError::NonFiniteLoss(loss));
            }
            velocity.tweet.accumulate(&grads.tweet, cfg.momentum);
            velocity.article.accumulate(&grads.article, cfg.momentum);
            encoder.tweet_map.apply(&velocity.tweet, cfg.lr);
            encoder.article_map.apply(&velocity.article, cfg.lr);
        }
        let epoch_loss = mean_loss(&encoder, &pairs, cfg.margin)?;
        if !epoch_loss.is_finite() || !encoder.is_finite() {
            return Err(ContrastError::NonFiniteLoss(epoch_loss));
        }
        loss_trace.push(epoch_loss);
    }

    Ok(TrainedEncoder {
        encoder,
        config: cfg.clone(),
        strategy,
        loss_trace,
    })
}
