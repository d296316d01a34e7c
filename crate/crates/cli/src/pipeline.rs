//! Pipeline stages shared by the subcommands.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use toml::Table as TomlTable;
use tweetlink::cascade::{build_cascades, cut, score_cascade, Cascade};
use tweetlink::contrast::{self, DualEncoder, FeatureSet, LongTextStrategy, Side, TrainedEncoder};
use tweetlink::corpus::{
    self, build_ground_truth, keyword_filter, load_annotations, load_documents, load_keywords,
    load_pairs, DocKind, Document, LinkedPair, PairLabel, Verdict,
};
use tweetlink::evalx::{
    self, average_precision, consensus_score, fleiss_kappa, masked_pairs, EvalError,
};
use tweetlink::linker::{calibrate_threshold, score_matrix};
use tweetlink::textprep::{
    augment_split, chunk, clean, tokenize_lemmatize, truncate, LemmaMap, TokenSeq,
};
use tweetlink::vectorize::{EmbeddingTable, LdaModel, TfidfModel};
use tweetlink::{GroundTruthMatrix, MetricsReport, SimilarityMatrix};

use crate::config::{FeatureKind, ModelKind, RunConfig};
use crate::error::{io_error, CliError};
use crate::report::{emit_report, Cell, ReportFormat, Table};

/// Serde name of a unit enum value, e.g. `mean_chunks`.
pub fn serde_name<T: Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub tweets: Vec<Document>,
    pub articles: Vec<Document>,
    pub pairs: Vec<LinkedPair>,
    /// Fleiss' kappa of the annotations, when they were given and every
    /// pair has the same number of annotators.
    pub kappa: Option<f64>,
}

impl Corpus {
    pub fn tweet_ids(&self) -> Vec<String> {
        self.tweets.iter().map(|d| d.id.clone()).collect()
    }

    pub fn article_ids(&self) -> Vec<String> {
        self.articles.iter().map(|d| d.id.clone()).collect()
    }

    /// Tweets carrying at least one match or no-match label, in document
    /// order.
    pub fn labeled_tweet_ids(&self) -> Vec<String> {
        let labeled: BTreeSet<&str> = self
            .pairs
            .iter()
            .filter(|p| p.label != PairLabel::Unknown)
            .map(|p| p.tweet_id.as_str())
            .collect();
        self.tweets
            .iter()
            .filter(|d| labeled.contains(d.id.as_str()))
            .map(|d| d.id.clone())
            .collect()
    }
}

fn annotation_kappa(records: &[corpus::AnnotationRecord]) -> Option<f64> {
    let mut table: BTreeMap<(&str, &str), Vec<u64>> = BTreeMap::new();
    for r in records {
        let counts = table
            .entry((r.tweet_id.as_str(), r.article_id.as_str()))
            .or_insert_with(|| vec![0; 3]);
        counts[match r.verdict {
            Verdict::Match => 0,
            Verdict::NoMatch => 1,
            Verdict::Skip => 2,
        }] += 1;
    }
    let rows: Vec<Vec<u64>> = table.into_values().collect();
    match fleiss_kappa(&rows) {
        Ok(k) => Some(k),
        Err(e) => {
            log::warn!("annotator agreement not computed: {e}");
            None
        }
    }
}

/// Loads documents and labels. Labels come from `paths.pairs`, or else from
/// the annotator consensus over `paths.annotations`. With `paths.keywords`
/// set, tweets without a keyword are dropped along with their labels.
pub fn ingest(cfg: &RunConfig) -> Result<Corpus, CliError> {
    let docs = load_documents(cfg.require_path("documents", &cfg.paths.documents)?, None)?;
    let (mut tweets, articles): (Vec<Document>, Vec<Document>) =
        docs.into_iter().partition(|d| d.kind == DocKind::Tweet);
    let known: BTreeSet<String> = tweets
        .iter()
        .chain(&articles)
        .map(|d| d.id.clone())
        .collect();
    if cfg.paths.keywords.is_some() {
        let keywords = load_keywords(cfg.require_path("keywords", &cfg.paths.keywords)?)?;
        let before = tweets.len();
        tweets = keyword_filter(&tweets, &keywords);
        log::info!("keyword filter kept {} of {before} tweets", tweets.len());
    }

    let annotations = match &cfg.paths.annotations {
        Some(_) => Some(load_annotations(
            cfg.require_path("annotations", &cfg.paths.annotations)?,
        )?),
        None => None,
    };
    let pairs = if cfg.paths.pairs.is_some() {
        load_pairs(cfg.require_path("pairs", &cfg.paths.pairs)?)?
    } else if let Some(records) = &annotations {
        consensus_score(records, cfg.consensus_threshold)
            .into_iter()
            .map(|((t, a), c)| {
                let label = match c.label {
                    1 => PairLabel::Match,
                    -1 => PairLabel::NoMatch,
                    _ => PairLabel::Unknown,
                };
                LinkedPair::new(t, a, label)
            })
            .collect()
    } else {
        return Err(CliError::ConfigInvalid(
            "set paths.pairs or paths.annotations".into(),
        ));
    };

    for p in &pairs {
        for id in [&p.tweet_id, &p.article_id] {
            if !known.contains(id) {
                return Err(corpus::CorpusError::UnknownId(id.clone()).into());
            }
        }
    }
    let kept: BTreeSet<&str> = tweets.iter().map(|d| d.id.as_str()).collect();
    let pairs: Vec<LinkedPair> = pairs
        .into_iter()
        .filter(|p| kept.contains(p.tweet_id.as_str()))
        .collect();
    let kappa = annotations.as_deref().and_then(annotation_kappa);
    Ok(Corpus {
        tweets,
        articles,
        pairs,
        kappa,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub corpus: Corpus,
    /// Cleaned, lemmatized tokens of every document.
    pub tokens: BTreeMap<String, TokenSeq>,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let corpus = ingest(cfg)?;
    let lemmas = match &cfg.paths.lemmas {
        Some(_) => LemmaMap::load(cfg.require_path("lemmas", &cfg.paths.lemmas)?)?,
        None => LemmaMap::new(),
    };
    let tokens = corpus
        .tweets
        .iter()
        .chain(&corpus.articles)
        .map(|d| {
            (
                d.id.clone(),
                tokenize_lemmatize(&clean(&d.text, &cfg.cleaning), &lemmas),
            )
        })
        .collect();
    Ok(Prepared { corpus, tokens })
}

/// Token segments an article is trained on: the truncated text, its
/// chunks, or header and parts. With `for_training` false, augmentation
/// falls back to the truncated text, which is what gets scored.
pub fn article_segments(
    tokens: &TokenSeq,
    cfg: &RunConfig,
    for_training: bool,
) -> Result<Vec<TokenSeq>, CliError> {
    let truncated = truncate(tokens, cfg.chunking.truncate_limit);
    if tokens.is_empty() {
        return Ok(vec![truncated]);
    }
    Ok(match cfg.strategy {
        LongTextStrategy::Truncate => vec![truncated],
        LongTextStrategy::MeanChunks => chunk(tokens, &cfg.chunking)?,
        LongTextStrategy::Augment if for_training => {
            let (header, parts) = augment_split(tokens, &cfg.chunking)?;
            std::iter::once(header).chain(parts).collect()
        }
        LongTextStrategy::Augment => vec![truncated],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureModel {
    Tfidf(TfidfModel),
    Lda(LdaModel),
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Featurized {
    /// Inputs the dual encoder is trained on.
    pub set: FeatureSet,
    /// Inputs that get scored; differs from `set` only under augmentation.
    pub scoring: FeatureSet,
    pub model: FeatureModel,
}

/// Representation scored directly, or fed to the dual encoder.
pub fn feature_kind(cfg: &RunConfig) -> FeatureKind {
    match cfg.model {
        ModelKind::Tfidf => FeatureKind::Tfidf,
        ModelKind::Lda => FeatureKind::Lda,
        ModelKind::Dual => cfg.features,
    }
}

/// Vectorizes every document. TF-IDF and LDA are fitted on all tweets and
/// full article texts; no labels are involved.
pub fn featurize(prep: &Prepared, cfg: &RunConfig) -> Result<Featurized, CliError> {
    let c = &prep.corpus;
    let augment = cfg.strategy == LongTextStrategy::Augment;
    let mut segments: BTreeMap<String, Vec<TokenSeq>> = BTreeMap::new();
    let mut scored_segments: BTreeMap<String, Vec<TokenSeq>> = BTreeMap::new();
    for a in &c.articles {
        let tokens = &prep.tokens[&a.id];
        segments.insert(a.id.clone(), article_segments(tokens, cfg, true)?);
        if augment {
            scored_segments.insert(a.id.clone(), article_segments(tokens, cfg, false)?);
        }
    }
    let fit_docs: Vec<TokenSeq> = c
        .tweets
        .iter()
        .chain(&c.articles)
        .map(|d| prep.tokens[&d.id].clone())
        .collect();

    let mut set = FeatureSet::default();
    let mut scoring = FeatureSet::default();
    let model = match feature_kind(cfg) {
        FeatureKind::Tfidf => {
            let m = TfidfModel::fit(&fit_docs)?;
            for t in &c.tweets {
                set.tweets
                    .insert(t.id.clone(), m.transform(&prep.tokens[&t.id]).to_dense());
            }
            for (id, segs) in &segments {
                set.articles.insert(
                    id.clone(),
                    segs.iter().map(|s| m.transform(s).to_dense()).collect(),
                );
            }
            for (id, segs) in &scored_segments {
                scoring.articles.insert(
                    id.clone(),
                    segs.iter().map(|s| m.transform(s).to_dense()).collect(),
                );
            }
            FeatureModel::Tfidf(m)
        }
        FeatureKind::Lda => {
            let m = LdaModel::fit(&fit_docs, &cfg.lda_config())?;
            for t in &c.tweets {
                set.tweets.insert(
                    t.id.clone(),
                    m.infer(&prep.tokens[&t.id], cfg.infer_iters, cfg.seed),
                );
            }
            for (id, segs) in &segments {
                let views = segs
                    .iter()
                    .map(|s| m.infer(s, cfg.infer_iters, cfg.seed))
                    .collect();
                set.articles.insert(id.clone(), views);
            }
            for (id, segs) in &scored_segments {
                let views = segs
                    .iter()
                    .map(|s| m.infer(s, cfg.infer_iters, cfg.seed))
                    .collect();
                scoring.articles.insert(id.clone(), views);
            }
            FeatureModel::Lda(m)
        }
        FeatureKind::External => {
            let table =
                EmbeddingTable::load(cfg.require_path("embeddings", &cfg.paths.embeddings)?)?;
            if cfg.strategy != LongTextStrategy::Truncate {
                log::warn!(
                    "external embeddings hold one vector per article; strategy has no effect"
                );
            }
            for t in &c.tweets {
                set.tweets.insert(t.id.clone(), table.get(&t.id)?.to_vec());
            }
            for a in &c.articles {
                let v = vec![table.get(&a.id)?.to_vec()];
                scoring.articles.insert(a.id.clone(), v.clone());
                set.articles.insert(a.id.clone(), v);
            }
            FeatureModel::External
        }
    };
    scoring.tweets = set.tweets.clone();
    if !augment {
        scoring.articles = set.articles.clone();
    }
    Ok(Featurized {
        set,
        scoring,
        model,
    })
}

/// Disjoint train/validation partition of tweets and of articles.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub train_tweets: BTreeSet<String>,
    pub val_tweets: BTreeSet<String>,
    pub train_articles: BTreeSet<String>,
    pub val_articles: BTreeSet<String>,
}

fn holdout<R: Rng>(
    ids: &[String],
    fraction: f64,
    what: &str,
    rng: &mut R,
) -> Result<(BTreeSet<String>, BTreeSet<String>), CliError> {
    if ids.len() < 2 {
        return Err(CliError::ConfigInvalid(format!(
            "need at least two {what} to split, found {}",
            ids.len()
        )));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(rng);
    let n_val = ((ids.len() as f64 * fraction).round() as usize).clamp(1, ids.len() - 1);
    let val = shuffled[..n_val].iter().cloned().collect();
    let train = shuffled[n_val..].iter().cloned().collect();
    Ok((train, val))
}

/// Shuffles labeled tweets and articles independently and holds out
/// `val_fraction` of each. Training uses train tweets × train articles,
/// validation val tweets × val articles, so no tweet or article is in both.
pub fn split_ids(
    tweets: &[String],
    articles: &[String],
    val_fraction: f64,
    seed: u64,
) -> Result<Split, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train_tweets, val_tweets) = holdout(tweets, val_fraction, "labeled tweets", &mut rng)?;
    let (train_articles, val_articles) = holdout(articles, val_fraction, "articles", &mut rng)?;
    Ok(Split {
        train_tweets,
        val_tweets,
        train_articles,
        val_articles,
    })
}

/// Fails if any evaluated tweet or article belongs to the training split.
pub fn check_disjoint(split: &Split, rows: &[String], cols: &[String]) -> Result<(), CliError> {
    if let Some(id) = split.train_tweets.intersection(&split.val_tweets).next() {
        return Err(CliError::SplitLeak(id.clone()));
    }
    if let Some(id) = split
        .train_articles
        .intersection(&split.val_articles)
        .next()
    {
        return Err(CliError::SplitLeak(id.clone()));
    }
    for id in rows {
        if split.train_tweets.contains(id) {
            return Err(CliError::SplitLeak(id.clone()));
        }
    }
    for id in cols {
        if split.train_articles.contains(id) {
            return Err(CliError::SplitLeak(id.clone()));
        }
    }
    Ok(())
}

/// Trains the dual encoder on the matches among train tweets × train
/// articles; negatives are drawn from train articles only.
pub fn train_on(
    prep: &Prepared,
    features: &FeatureSet,
    split: &Split,
    cfg: &RunConfig,
) -> Result<TrainedEncoder, CliError> {
    let positives: Vec<(String, String)> = prep
        .corpus
        .pairs
        .iter()
        .filter(|p| {
            p.label == PairLabel::Match
                && split.train_tweets.contains(&p.tweet_id)
                && split.train_articles.contains(&p.article_id)
        })
        .map(|p| (p.tweet_id.clone(), p.article_id.clone()))
        .collect();
    let subset = FeatureSet {
        tweets: features
            .tweets
            .iter()
            .filter(|(id, _)| split.train_tweets.contains(*id))
            .map(|(id, v)| (id.clone(), v.clone()))
            .collect(),
        articles: features
            .articles
            .iter()
            .filter(|(id, _)| split.train_articles.contains(*id))
            .map(|(id, v)| (id.clone(), v.clone()))
            .collect(),
    };
    let trained = contrast::train(&positives, &subset, &cfg.train_config(), cfg.strategy)?;
    log::info!(
        "trained on {} positives; loss {:.6} -> {:.6}",
        positives.len(),
        trained.loss_trace.first().copied().unwrap_or(f64::NAN),
        trained.loss_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(trained)
}

/// Similarities of `rows` × `cols`, either of the raw features or in the
/// encoder's joint space.
pub fn similarity(
    features: &FeatureSet,
    encoder: Option<&DualEncoder>,
    strategy: LongTextStrategy,
    rows: &[String],
    cols: &[String],
) -> Result<SimilarityMatrix, CliError> {
    let missing = |id: &String| contrast::ContrastError::MissingFeatures(id.clone());
    let mut tweets: HashMap<String, Vec<f64>> = HashMap::new();
    for id in rows {
        let x = features.tweets.get(id).ok_or_else(|| missing(id))?;
        let v = match encoder {
            Some(enc) => contrast::encode(enc, Side::Tweet, std::slice::from_ref(x), strategy)?,
            None => x.clone(),
        };
        tweets.insert(id.clone(), v);
    }
    let mut articles: HashMap<String, Vec<f64>> = HashMap::new();
    for id in cols {
        let views = features.articles.get(id).ok_or_else(|| missing(id))?;
        let v = match encoder {
            Some(enc) => contrast::encode(enc, Side::Article, views, strategy)?,
            None if strategy == LongTextStrategy::MeanChunks => {
                tweetlink::cascade::aggregate(views, tweetlink::AggregationFn::Mean)?
            }
            None => views
                .first()
                .cloned()
                .ok_or(contrast::ContrastError::EmptyChunkList)?,
        };
        articles.insert(id.clone(), v);
    }
    Ok(score_matrix(rows, &tweets, cols, &articles)?)
}

/// Ground truth restricted to `rows` × `cols`.
pub fn ground_truth(
    pairs: &[LinkedPair],
    rows: &[String],
    cols: &[String],
) -> Result<GroundTruthMatrix, CliError> {
    let r: BTreeSet<&str> = rows.iter().map(String::as_str).collect();
    let c: BTreeSet<&str> = cols.iter().map(String::as_str).collect();
    let inside: Vec<LinkedPair> = pairs
        .iter()
        .filter(|p| r.contains(p.tweet_id.as_str()) && c.contains(p.article_id.as_str()))
        .cloned()
        .collect();
    Ok(build_ground_truth(&inside, rows, cols)?)
}

/// Similarity matrix with its ground truth, ready for evaluation.
#[derive(Debug, Clone)]
pub struct Scored {
    pub sim: SimilarityMatrix,
    pub gt: GroundTruthMatrix,
    pub trained: Option<TrainedEncoder>,
    pub split: Option<Split>,
}

/// Scores every tweet against every article. A dual encoder is first
/// trained on the training split, and the matrix then covers only tweets
/// and articles outside it.
pub fn score(prep: &Prepared, cfg: &RunConfig) -> Result<Scored, CliError> {
    let feats = featurize(prep, cfg)?;
    let c = &prep.corpus;
    let (trained, split) = match cfg.model {
        ModelKind::Dual => {
            let split = split_ids(
                &c.labeled_tweet_ids(),
                &c.article_ids(),
                cfg.val_fraction,
                cfg.seed,
            )?;
            (Some(train_on(prep, &feats.set, &split, cfg)?), Some(split))
        }
        _ => (None, None),
    };
    let (rows, cols): (Vec<String>, Vec<String>) = match &split {
        Some(s) => (
            c.tweet_ids()
                .into_iter()
                .filter(|id| !s.train_tweets.contains(id))
                .collect(),
            c.article_ids()
                .into_iter()
                .filter(|id| s.val_articles.contains(id))
                .collect(),
        ),
        None => (c.tweet_ids(), c.article_ids()),
    };
    if let Some(s) = &split {
        check_disjoint(s, &rows, &cols)?;
    }
    let sim = similarity(
        &feats.scoring,
        trained.as_ref().map(|t| &t.encoder),
        cfg.strategy,
        &rows,
        &cols,
    )?;
    let gt = ground_truth(&c.pairs, &rows, &cols)?;
    Ok(Scored {
        sim,
        gt,
        trained,
        split,
    })
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub sim: SimilarityMatrix,
    pub report: MetricsReport,
    pub threshold: f64,
    pub calibrated: bool,
    pub trained: Option<TrainedEncoder>,
}

impl PipelineOutput {
    pub fn table(&self, cfg: &RunConfig) -> Table {
        let r = &self.report;
        let mut t = Table::new([
            "model",
            "features",
            "strategy",
            "threshold",
            "calibrated",
            "ap",
            "accuracy",
            "precision",
            "recall",
            "f1",
            "n",
            "n_tweets",
            "n_articles",
        ]);
        let (rows, cols) = self.sim.shape();
        t.push(vec![
            serde_name(&cfg.model).into(),
            serde_name(&feature_kind(cfg)).into(),
            serde_name(&cfg.strategy).into(),
            self.threshold.into(),
            self.calibrated.to_string().into(),
            r.average_precision.into(),
            r.accuracy.into(),
            r.precision.into(),
            r.recall.into(),
            r.f1.into(),
            r.n_evaluated.into(),
            rows.into(),
            cols.into(),
        ]);
        t
    }
}

pub fn create_out_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    fs::create_dir_all(&cfg.out_dir).map_err(io_error(&cfg.out_dir))?;
    Ok(&cfg.out_dir)
}

pub fn write_matrix(sim: &SimilarityMatrix, path: &Path) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(io_error(path))?;
    sim.write_csv(std::io::BufWriter::new(file))?;
    Ok(())
}

/// Threshold from the configuration, or the F1-optimal one.
pub fn decide_threshold(
    cfg: &RunConfig,
    sim: &SimilarityMatrix,
    gt: &GroundTruthMatrix,
) -> Result<(f64, bool), CliError> {
    match cfg.threshold {
        Some(t) => Ok((t, false)),
        None => Ok((calibrate_threshold(sim, gt)?.threshold, true)),
    }
}

/// Evaluation without writing anything.
pub fn evaluate_run(cfg: &RunConfig) -> Result<PipelineOutput, CliError> {
    let prep = prepare(cfg)?;
    let scored = score(&prep, cfg)?;
    let (threshold, calibrated) = decide_threshold(cfg, &scored.sim, &scored.gt)?;
    let report = evalx::evaluate(
        scored.sim.values(),
        scored.sim.shape(),
        &scored.gt,
        threshold,
    )?;
    Ok(PipelineOutput {
        sim: scored.sim,
        report,
        threshold,
        calibrated,
        trained: scored.trained,
    })
}

/// prep, vectorize/encode, score, calibrate unless a threshold is given,
/// classify and evaluate. Writes `similarity.csv`, `report.json` and, for
/// the dual encoder, `encoder.json` into the output directory.
pub fn run_pipeline(cfg: &RunConfig) -> Result<(PipelineOutput, Vec<PathBuf>), CliError> {
    let out = evaluate_run(cfg)?;
    let dir = create_out_dir(cfg)?;
    let mut written = vec![dir.join("similarity.csv"), dir.join("report.json")];
    write_matrix(&out.sim, &written[0])?;
    emit_report(&out.table(cfg), ReportFormat::Json, &written[1])?;
    if let Some(t) = &out.trained {
        let path = dir.join("encoder.json");
        tweetlink::Persist::save(t, &path)?;
        written.push(path);
    }
    Ok((out, written))
}

pub fn cascades(prep: &Prepared) -> Result<Vec<Cascade>, CliError> {
    Ok(build_cascades(&prep.corpus.tweets)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub ap: f64,
    pub n_cascades: usize,
}

pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new(["n", "ap", "n_cascades"]);
    for r in rows {
        t.push(vec![r.n.into(), r.ap.into(), r.n_cascades.into()]);
    }
    t
}

/// Masked AP of cascades cut to each size. A cascade is labeled by its root
/// tweet's ground-truth row; cascades with an unlabeled root, or touching
/// the training split, are left out.
pub fn sweep_size(cfg: &RunConfig, sizes: &[usize]) -> Result<Vec<SweepRow>, CliError> {
    if sizes.is_empty() {
        return Err(CliError::ConfigInvalid("no cascade sizes given".into()));
    }
    if sizes[0] < 1 || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::ConfigInvalid(
            "cascade sizes must be at least 1 and strictly ascending".into(),
        ));
    }
    let prep = prepare(cfg)?;
    let scored = score(&prep, cfg)?;
    let rows: HashMap<&str, usize> = scored
        .gt
        .tweet_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let eligible: Vec<Cascade> = cascades(&prep)?
        .into_iter()
        .filter(|c| c.member_ids().all(|id| rows.contains_key(id)))
        .filter(|c| scored.gt.row(rows[c.root_id()]).iter().any(|&v| v != 0))
        .collect();
    if eligible.is_empty() {
        return Err(EvalError::EmptyInput.into());
    }
    let cols = scored.gt.article_ids().to_vec();
    let roots: Vec<String> = eligible.iter().map(|c| c.root_id().to_string()).collect();
    let labels: Vec<i8> = eligible
        .iter()
        .flat_map(|c| scored.gt.row(rows[c.root_id()]).to_vec())
        .collect();
    let gt = GroundTruthMatrix::new(roots, cols.clone(), labels)?;

    let mut out = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut values = Vec::with_capacity(eligible.len() * cols.len());
        for c in &eligible {
            values.extend(score_cascade(&cut(c, n), &scored.sim, cfg.aggregation)?);
        }
        let (flat, flat_labels) = masked_pairs(&values, gt.shape(), &gt)?;
        out.push(SweepRow {
            n,
            ap: average_precision(&flat, &flat_labels)?,
            n_cascades: eligible.len(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpPoint {
    pub params: TomlTable,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpOutcome {
    pub points: Vec<HpPoint>,
    /// Index of the first point with the highest validation AP.
    pub best: usize,
    pub best_config: RunConfig,
}

impl HpOutcome {
    pub fn table(&self) -> Table {
        let mut t = Table::new(["index", "ap", "params", "best"]);
        for (i, p) in self.points.iter().enumerate() {
            let params = serde_json::to_string(&p.params).expect("toml values serialize to JSON");
            t.push(vec![
                i.into(),
                p.ap.into(),
                Cell::Text(params),
                (i == self.best).to_string().into(),
            ]);
        }
        t
    }
}

/// The grid followed by `budget` points drawn uniformly from `space`.
pub fn search_points(cfg: &RunConfig) -> Result<Vec<TomlTable>, CliError> {
    let mut points = cfg.sweep.grid.clone();
    if cfg.sweep.budget > 0 {
        if cfg.sweep.space.is_empty() {
            return Err(CliError::ConfigInvalid(
                "sweep.budget needs a sweep.space".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for _ in 0..cfg.sweep.budget {
            let mut point = TomlTable::new();
            for (key, choices) in &cfg.sweep.space {
                let value = choices.choose(&mut rng).ok_or_else(|| {
                    CliError::ConfigInvalid(format!("sweep.space.{key} has no values"))
                })?;
                point.insert(key.clone(), value.clone());
            }
            points.push(point);
        }
    }
    Ok(points)
}

/// Masked AP on the validation split, after training on the training split
/// when the model needs it.
pub fn validation_ap(prep: &Prepared, cfg: &RunConfig, split: &Split) -> Result<f64, CliError> {
    let feats = featurize(prep, cfg)?;
    let trained = match cfg.model {
        ModelKind::Dual => Some(train_on(prep, &feats.set, split, cfg)?),
        _ => None,
    };
    let rows: Vec<String> = prep
        .corpus
        .tweet_ids()
        .into_iter()
        .filter(|id| split.val_tweets.contains(id))
        .collect();
    let cols: Vec<String> = prep
        .corpus
        .article_ids()
        .into_iter()
        .filter(|id| split.val_articles.contains(id))
        .collect();
    check_disjoint(split, &rows, &cols)?;
    let sim = similarity(
        &feats.scoring,
        trained.as_ref().map(|t| &t.encoder),
        cfg.strategy,
        &rows,
        &cols,
    )?;
    let gt = ground_truth(&prep.corpus.pairs, &rows, &cols)?;
    let (flat, labels) = masked_pairs(sim.values(), sim.shape(), &gt)?;
    Ok(average_precision(&flat, &labels)?)
}

/// Evaluates every search point on one fixed split (drawn from the base
/// seed) and returns the configuration with the highest validation AP;
/// ties go to the earlier point.
pub fn sweep_hyperparams(cfg: &RunConfig) -> Result<HpOutcome, CliError> {
    let points = search_points(cfg)?;
    if points.is_empty() {
        return Err(CliError::EmptyGrid);
    }
    let base_prep = prepare(cfg)?;
    let c = &base_prep.corpus;
    let split = split_ids(
        &c.labeled_tweet_ids(),
        &c.article_ids(),
        cfg.val_fraction,
        cfg.seed,
    )?;

    let mut results = Vec::with_capacity(points.len());
    let mut best: Option<(usize, f64, RunConfig)> = None;
    for (i, point) in points.into_iter().enumerate() {
        let pc = cfg.with_overrides(&point)?;
        let same_inputs = pc.paths == cfg.paths
            && pc.cleaning == cfg.cleaning
            && pc.consensus_threshold == cfg.consensus_threshold;
        let ap = if same_inputs {
            validation_ap(&base_prep, &pc, &split)?
        } else {
            validation_ap(&prepare(&pc)?, &pc, &split)?
        };
        log::info!("point {i}: validation AP {ap:.6}");
        if best.as_ref().is_none_or(|(_, b, _)| ap > *b) {
            best = Some((i, ap, pc));
        }
        results.push(HpPoint { params: point, ap });
    }
    let (best, _, best_config) = best.expect("at least one point");
    Ok(HpOutcome {
        points: results,
        best,
        best_config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let s = split_ids(&ids("t", 10), &ids("a", 5), 0.5, 3).unwrap();
        assert_eq!(s.val_tweets.len(), 5);
        assert_eq!(s.train_tweets.len(), 5);
        assert_eq!(s.val_articles.len() + s.train_articles.len(), 5);
        assert!(s.val_tweets.is_disjoint(&s.train_tweets));
        assert!(s.val_articles.is_disjoint(&s.train_articles));
        assert_eq!(s, split_ids(&ids("t", 10), &ids("a", 5), 0.5, 3).unwrap());
        assert!(split_ids(&ids("t", 1), &ids("a", 5), 0.5, 3).is_err());
    }

    #[test]
    fn leak_is_detected() {
        let s = split_ids(&ids("t", 4), &ids("a", 4), 0.5, 0).unwrap();
        let train_tweet = s.train_tweets.iter().next().unwrap().clone();
        let val_cols: Vec<String> = s.val_articles.iter().cloned().collect();
        assert!(check_disjoint(&s, std::slice::from_ref(&train_tweet), &val_cols).is_err());
        let val_rows: Vec<String> = s.val_tweets.iter().cloned().collect();
        assert!(check_disjoint(&s, &val_rows, &val_cols).is_ok());
    }

    #[test]
    fn segments_follow_strategy() {
        let mut cfg = RunConfig::default();
        cfg.chunking.content_len = 2;
        cfg.chunking.truncate_limit = 3;
        cfg.chunking.header_len = 2;
        cfg.chunking.part_len = 2;
        let tokens = TokenSeq::from_whitespace("a b c d e");
        let truncated = [TokenSeq::from_whitespace("a b c")];
        assert_eq!(article_segments(&tokens, &cfg, true).unwrap(), truncated);
        cfg.strategy = LongTextStrategy::MeanChunks;
        assert_eq!(article_segments(&tokens, &cfg, true).unwrap().len(), 3);
        cfg.strategy = LongTextStrategy::Augment;
        let segs = article_segments(&tokens, &cfg, true).unwrap();
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[0], TokenSeq::from_whitespace("a b"));
        assert_eq!(article_segments(&tokens, &cfg, false).unwrap(), truncated);
        assert_eq!(
            article_segments(&TokenSeq::default(), &cfg, true)
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn serde_names() {
        assert_eq!(serde_name(&LongTextStrategy::MeanChunks), "mean_chunks");
        assert_eq!(serde_name(&ModelKind::Dual), "dual");
    }
}
