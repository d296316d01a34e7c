//! Documents, linked pairs, annotations and keyword lists.
//!
//! Everything is ingested from JSON-lines files. Ids are opaque strings since
//! tweet ids in real exports do not fit 64-bit integers.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalx::GroundTruthMatrix;
use crate::rng::seeded;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("missing field `{field}` on line {line}")]
    MissingField { field: &'static str, line: usize },
    #[error("invalid field `{field}` on line {line}: {reason}")]
    InvalidField {
        field: &'static str,
        line: usize,
        reason: String,
    },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("article `{0}` has neither text nor summary")]
    EmptyArticle(String),
    #[error("document `{0}` is not an article")]
    NotAnArticle(String),
    #[error("unknown id `{0}`")]
    UnknownId(String),
    #[error("conflicting labels for pair ({tweet_id}, {article_id})")]
    ConflictingLabels {
        tweet_id: String,
        article_id: String,
    },
    #[error("annotator `{annotator_id}` rated ({tweet_id}, {article_id}) more than once")]
    DuplicateAnnotation {
        tweet_id: String,
        article_id: String,
        annotator_id: String,
    },
    #[error("keyword list is empty")]
    EmptyKeywords,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocKind {
    Tweet,
    Article,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParentKind {
    Reply,
    Quote,
}

/// Link from a tweet to the tweet it replies to or quotes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParentLink {
    pub id: String,
    pub kind: ParentKind,
}

/// A tweet or a news article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDocument", into = "RawDocument")]
pub struct Document {
    pub id: String,
    pub kind: DocKind,
    pub text: String,
    pub summary: Option<String>,
    /// Epoch seconds.
    pub created_at: i64,
    /// Only tweets have parents.
    pub parent: Option<ParentLink>,
}

impl Document {
    pub fn tweet(id: impl Into<String>, text: impl Into<String>, created_at: i64) -> Self {
        Document {
            id: id.into(),
            kind: DocKind::Tweet,
            text: text.into(),
            summary: None,
            created_at,
            parent: None,
        }
    }

    pub fn article(id: impl Into<String>, text: impl Into<String>, created_at: i64) -> Self {
        Document {
            kind: DocKind::Article,
            ..Document::tweet(id, text, created_at)
        }
    }

    pub fn with_parent(mut self, id: impl Into<String>, kind: ParentKind) -> Self {
        self.parent = Some(ParentLink {
            id: id.into(),
            kind,
        });
        self
    }

    pub fn parent_id(&self) -> Option<&str> {
        self.parent.as_ref().map(|p| p.id.as_str())
    }
}

/// On-disk shape of a document line.
#[derive(Debug, Serialize, Deserialize)]
struct RawDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<DocKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    summary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    created_at: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent_kind: Option<ParentKind>,
}

impl RawDocument {
    fn validate(self, line: usize, default_kind: Option<DocKind>) -> Result<Document, CorpusError> {
        let missing = |field| CorpusError::MissingField { field, line };
        let id = self.id.ok_or_else(|| missing("id"))?;
        if id.is_empty() {
            return Err(CorpusError::InvalidField {
                field: "id",
                line,
                reason: "empty".into(),
            });
        }
        let kind = self.kind.or(default_kind).ok_or_else(|| missing("kind"))?;
        let text = self.text.ok_or_else(|| missing("text"))?;
        let created_at = self.created_at.ok_or_else(|| missing("created_at"))?;
        let parent = match (self.parent_id, self.parent_kind) {
            (None, None) => None,
            (Some(_), None) => return Err(missing("parent_kind")),
            (None, Some(_)) => return Err(missing("parent_id")),
            (Some(id), Some(kind)) => Some(ParentLink { id, kind }),
        };
        if parent.is_some() && kind == DocKind::Article {
            return Err(CorpusError::InvalidField {
                field: "parent_id",
                line,
                reason: "articles cannot have a parent".into(),
            });
        }
        Ok(Document {
            id,
            kind,
            text,
            summary: self.summary,
            created_at,
            parent,
        })
    }
}

impl TryFrom<RawDocument> for Document {
    type Error = CorpusError;

    fn try_from(raw: RawDocument) -> Result<Self, Self::Error> {
        raw.validate(0, None)
    }
}

impl From<Document> for RawDocument {
    fn from(doc: Document) -> Self {
        let (parent_id, parent_kind) = match doc.parent {
            Some(p) => (Some(p.id), Some(p.kind)),
            None => (None, None),
        };
        RawDocument {
            id: Some(doc.id),
            kind: Some(doc.kind),
            text: Some(doc.text),
            summary: doc.summary,
            created_at: Some(doc.created_at),
            parent_id,
            parent_kind,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLabel {
    Match,
    NoMatch,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkedPair {
    pub tweet_id: String,
    pub article_id: String,
    pub label: PairLabel,
}

impl LinkedPair {
    pub fn new(
        tweet_id: impl Into<String>,
        article_id: impl Into<String>,
        label: PairLabel,
    ) -> Self {
        LinkedPair {
            tweet_id: tweet_id.into(),
            article_id: article_id.into(),
            label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Match,
    NoMatch,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub tweet_id: String,
    pub article_id: String,
    pub annotator_id: String,
    pub verdict: Verdict,
}

/// Lowercase search keywords; hashtags keep their leading `#`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordList {
    entries: Vec<String>,
}

impl KeywordList {
    pub fn new<I, S>(entries: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let entries: Vec<String> = entries
            .into_iter()
            .map(|s| s.as_ref().trim().to_lowercase())
            .filter(|s| !s.is_empty())
            .collect();
        if entries.is_empty() {
            return Err(CorpusError::EmptyKeywords);
        }
        Ok(KeywordList { entries })
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }
}

fn read_to_string(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-blank lines of a JSONL file with their 1-based line numbers.
fn jsonl_lines(content: &str) -> impl Iterator<Item = (usize, &str)> {
    content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_line<T: for<'de> Deserialize<'de>>(line: usize, text: &str) -> Result<T, CorpusError> {
    serde_json::from_str(text).map_err(|e| CorpusError::MalformedLine {
        line,
        message: e.to_string(),
    })
}

/// Loads documents from a JSONL file.
///
/// Lines without a `kind` take `default_kind`; with no default, `kind` is
/// required.
pub fn load_documents(
    path: &Path,
    default_kind: Option<DocKind>,
) -> Result<Vec<Document>, CorpusError> {
    parse_documents(&read_to_string(path)?, default_kind)
}

pub fn parse_documents(
    content: &str,
    default_kind: Option<DocKind>,
) -> Result<Vec<Document>, CorpusError> {
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    for (line, text) in jsonl_lines(content) {
        let raw: RawDocument = parse_line(line, text)?;
        let doc = raw.validate(line, default_kind)?;
        if !seen.insert(doc.id.clone()) {
            return Err(CorpusError::DuplicateId(doc.id));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_pairs(path: &Path) -> Result<Vec<LinkedPair>, CorpusError> {
    jsonl_lines(&read_to_string(path)?)
        .map(|(line, text)| parse_line(line, text))
        .collect()
}

pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, CorpusError> {
    let records: Vec<AnnotationRecord> = jsonl_lines(&read_to_string(path)?)
        .map(|(line, text)| parse_line(line, text))
        .collect::<Result<_, _>>()?;
    let mut seen = HashSet::new();
    for r in &records {
        if !seen.insert((&r.tweet_id, &r.article_id, &r.annotator_id)) {
            return Err(CorpusError::DuplicateAnnotation {
                tweet_id: r.tweet_id.clone(),
                article_id: r.article_id.clone(),
                annotator_id: r.annotator_id.clone(),
            });
        }
    }
    Ok(records)
}

pub fn load_keywords(path: &Path) -> Result<KeywordList, CorpusError> {
    KeywordList::new(read_to_string(path)?.lines())
}

/// Writes any serializable rows as JSON lines.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(row).expect("rows serialize to JSON");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Short representation of an article.
///
/// An explicit summary wins. Otherwise the first paragraph of the text (up
/// to the first blank line following some content) is used, cut to
/// `max_chars` characters; the result is always a prefix of the text.
pub fn extract_summary(article: &Document, max_chars: usize) -> Result<String, CorpusError> {
    if article.kind != DocKind::Article {
        return Err(CorpusError::NotAnArticle(article.id.clone()));
    }
    if let Some(summary) = article.summary.as_deref().filter(|s| !s.is_empty()) {
        return Ok(summary.to_string());
    }
    let text = article.text.as_str();
    if text.is_empty() {
        return Err(CorpusError::EmptyArticle(article.id.clone()));
    }
    let paragraph = first_paragraph(text);
    let paragraph = if paragraph.trim().is_empty() {
        text
    } else {
        paragraph
    };
    let end = paragraph
        .char_indices()
        .nth(max_chars.max(1))
        .map_or(paragraph.len(), |(i, _)| i);
    Ok(paragraph[..end].to_string())
}

fn first_paragraph(text: &str) -> &str {
    let bytes = text.as_bytes();
    let mut seen_content = false;
    for (i, c) in text.char_indices() {
        if c == '\n' && seen_content {
            let rest = &bytes[i + 1..];
            let blank = rest
                .iter()
                .take_while(|b| matches!(b, b' ' | b'\t' | b'\r'))
                .count();
            if rest.get(blank) == Some(&b'\n') {
                return text[..i].trim_end();
            }
        } else if !c.is_whitespace() {
            seen_content = true;
        }
    }
    text
}

/// Lowercased tokens used for keyword matching. Tokens are runs of
/// alphanumerics/underscores; a directly preceding `#` is kept.
pub fn keyword_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut hashtag = false;
    let flush = |current: &mut String, hashtag: &mut bool, tokens: &mut Vec<String>| {
        if !current.is_empty() {
            let tok = if *hashtag {
                format!("#{current}")
            } else {
                current.clone()
            };
            tokens.push(tok);
            current.clear();
        }
        *hashtag = false;
    };
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            current.extend(c.to_lowercase());
        } else {
            flush(&mut current, &mut hashtag, &mut tokens);
            hashtag = c == '#';
        }
    }
    flush(&mut current, &mut hashtag, &mut tokens);
    tokens
}

/// Keeps documents sharing at least one token with the keyword list.
pub fn keyword_filter(docs: &[Document], keywords: &KeywordList) -> Vec<Document> {
    let wanted: HashSet<&str> = keywords.entries().iter().map(String::as_str).collect();
    docs.iter()
        .filter(|d| {
            keyword_tokens(&d.text)
                .iter()
                .any(|t| wanted.contains(t.as_str()))
        })
        .cloned()
        .collect()
}

/// Ground truth over the given axes: 1 match, -1 no match, 0 elsewhere.
pub fn build_ground_truth(
    pairs: &[LinkedPair],
    tweets: &[String],
    articles: &[String],
) -> Result<GroundTruthMatrix, CorpusError> {
    let row: HashMap<&str, usize> = tweets
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let col: HashMap<&str, usize> = articles
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut labels: HashMap<(usize, usize), PairLabel> = HashMap::new();
    for pair in pairs {
        let r = *row
            .get(pair.tweet_id.as_str())
            .ok_or_else(|| CorpusError::UnknownId(pair.tweet_id.clone()))?;
        let c = *col
            .get(pair.article_id.as_str())
            .ok_or_else(|| CorpusError::UnknownId(pair.article_id.clone()))?;
        if let Some(prev) = labels.insert((r, c), pair.label) {
            if prev != pair.label {
                return Err(CorpusError::ConflictingLabels {
                    tweet_id: pair.tweet_id.clone(),
                    article_id: pair.article_id.clone(),
                });
            }
        }
    }
    let mut values = vec![0i8; tweets.len() * articles.len()];
    for ((r, c), label) in labels {
        values[r * articles.len() + c] = match label {
            PairLabel::Match => 1,
            PairLabel::NoMatch => -1,
            PairLabel::Unknown => 0,
        };
    }
    Ok(
        GroundTruthMatrix::new(tweets.to_vec(), articles.to_vec(), values)
            .expect("shape follows the axes"),
    )
}

/// Parameters of the synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_topics: usize,
    pub n_articles: usize,
    pub tweets_per_article: usize,
    pub vocab_per_topic: usize,
    /// Replies attached below each generated tweet, forming cascades.
    pub replies_per_tweet: usize,
    pub tweet_len: usize,
    pub lead_len: usize,
    pub body_len: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            n_topics: 2,
            n_articles: 50,
            tweets_per_article: 4,
            vocab_per_topic: 20,
            replies_per_tweet: 0,
            tweet_len: 8,
            lead_len: 12,
            body_len: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub documents: Vec<Document>,
    pub pairs: Vec<LinkedPair>,
    /// Topic of every article, in article order.
    pub article_topics: Vec<usize>,
}

impl Fixture {
    pub fn tweets(&self) -> impl Iterator<Item = &Document> {
        self.documents.iter().filter(|d| d.kind == DocKind::Tweet)
    }

    pub fn articles(&self) -> impl Iterator<Item = &Document> {
        self.documents.iter().filter(|d| d.kind == DocKind::Article)
    }
}

/// Lowercase letters `a..=y` in bijective base 25; `z` never appears.
fn letters(mut n: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'a' + (n % 25) as u8);
        n /= 25;
        if n == 0 {
            break;
        }
        n -= 1;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// Word `index` of `topic`'s vocabulary. Vocabularies of different topics
/// are disjoint and every word survives text cleaning.
pub fn topic_word(topic: usize, index: usize) -> String {
    format!("w{}z{}", letters(topic), letters(index))
}

/// Filler word shared by all topics, used only in replies.
pub fn noise_word(index: usize) -> String {
    format!("nz{}", letters(index))
}

fn sentence<R: Rng>(rng: &mut R, topic: usize, vocab: usize, len: usize) -> String {
    (0..len)
        .map(|_| topic_word(topic, rng.gen_range(0..vocab)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Deterministic labeled corpus with one disjoint vocabulary per topic.
pub fn synth_fixture(
    seed: u64,
    n_topics: usize,
    n_articles: usize,
    tweets_per_article: usize,
    vocab_per_topic: usize,
) -> Fixture {
    synth_corpus(&SynthSpec {
        seed,
        n_topics,
        n_articles,
        tweets_per_article,
        vocab_per_topic,
        ..SynthSpec::default()
    })
}

/// Full-control variant of [`synth_fixture`].
///
/// Article `i` belongs to topic `i % n_topics`. Every generated tweet is
/// labeled against every article (match within its topic, no_match across
/// topics). Replies carry no labels of their own.
pub fn synth_corpus(spec: &SynthSpec) -> Fixture {
    let n_topics = spec.n_topics.max(1);
    let vocab = spec.vocab_per_topic.max(1);
    let mut rng = seeded(spec.seed);
    let mut documents = Vec::new();
    let mut article_topics = Vec::new();
    let base = 1_700_000_000i64;

    for a in 0..spec.n_articles {
        let topic = a % n_topics;
        article_topics.push(topic);
        let lead = sentence(&mut rng, topic, vocab, spec.lead_len.max(1));
        let body = sentence(&mut rng, topic, vocab, spec.body_len);
        let text = if body.is_empty() {
            format!("{lead}.")
        } else {
            format!("{lead}.\n\n{body}.")
        };
        documents.push(Document::article(
            format!("a{a}"),
            text,
            base + 1000 * a as i64,
        ));
    }

    let mut tweet_topics = Vec::new();
    for (a, &topic) in article_topics.iter().enumerate() {
        for j in 0..spec.tweets_per_article {
            let id = format!("t{a}_{j}");
            let created = base + 1000 * a as i64 + 10 * (j as i64 + 1);
            let text = sentence(&mut rng, topic, vocab, spec.tweet_len.max(1));
            documents.push(Document::tweet(&id, text, created));
            tweet_topics.push((id.clone(), topic));

            let mut members: Vec<(String, i64)> = vec![(id.clone(), created)];
            for r in 0..spec.replies_per_tweet {
                let (parent_id, parent_time) = members
                    .choose(&mut rng)
                    .cloned()
                    .expect("cascade has a root");
                let reply_id = format!("{id}_r{r}");
                let time = parent_time + rng.gen_range(1..=50);
                let on_topic = spec.tweet_len.div_ceil(2);
                let mut words: Vec<String> = (0..on_topic)
                    .map(|_| topic_word(topic, rng.gen_range(0..vocab)))
                    .collect();
                words.extend(
                    (on_topic..spec.tweet_len.max(1)).map(|_| noise_word(rng.gen_range(0..vocab))),
                );
                let kind = if rng.gen_bool(0.5) {
                    ParentKind::Reply
                } else {
                    ParentKind::Quote
                };
                documents.push(
                    Document::tweet(&reply_id, words.join(" "), time).with_parent(&parent_id, kind),
                );
                members.push((reply_id, time));
            }
        }
    }

    let mut pairs = Vec::new();
    for (tweet_id, topic) in &tweet_topics {
        for (a, article_topic) in article_topics.iter().enumerate() {
            let label = if article_topic == topic {
                PairLabel::Match
            } else {
                PairLabel::NoMatch
            };
            pairs.push(LinkedPair::new(tweet_id, format!("a{a}"), label));
        }
    }

    Fixture {
        documents,
        pairs,
        article_topics,
    }
}
