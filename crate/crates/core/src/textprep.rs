//! Text cleaning, tokenization, lemmatization and long-text splitting.

use std::collections::HashMap;
use std::fs;
use std::ops::Deref;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("empty token sequence")]
    EmptyInput,
    #[error("token {0:?} is empty or contains whitespace")]
    InvalidToken(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("token {0:?} collides with a sentinel token")]
    SentinelCollision(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("lemma file line {line}: {message}")]
    MalformedLemma { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmojiMode {
    #[default]
    Drop,
    /// Replace every emoji with a `:shortcode:` token.
    Alias,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningConfig {
    pub min_word_len: usize,
    pub emoji_mode: EmojiMode,
    /// Drop the `#` of hashtags and keep the word. When false the hashtag
    /// survives as a `#word` token.
    pub strip_hashes: bool,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        CleaningConfig {
            min_word_len: 3,
            emoji_mode: EmojiMode::Drop,
            strip_hashes: true,
        }
    }
}

const URL_PREFIXES: [&str; 3] = ["http://", "https://", "www."];

fn remove_urls(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while !rest.is_empty() {
        if URL_PREFIXES.iter().any(|p| rest.starts_with(p)) {
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            out.push(' ');
            rest = &rest[end..];
        } else {
            let c = rest.chars().next().expect("nonempty");
            out.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    out
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn remove_mentions(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '@' {
            while chars.next_if(|&n| is_word_char(n)).is_some() {}
            out.push(' ');
        } else {
            out.push(c);
        }
    }
    out
}

fn emoji_alias(emoji: &emojis::Emoji) -> Option<String> {
    let raw = emoji
        .shortcode()
        .map(str::to_string)
        .unwrap_or_else(|| emoji.name().replace(' ', "_"));
    let name: String = raw
        .to_lowercase()
        .chars()
        .filter(|c| c.is_ascii_lowercase() || *c == '_')
        .collect();
    let name = name.trim_matches('_');
    (!name.is_empty()).then(|| format!(":{name}:"))
}

/// Longest emoji sequence at the start of `s`, as (byte length, emoji).
fn match_emoji(s: &str) -> Option<(usize, &'static emojis::Emoji)> {
    let ends: Vec<usize> = s
        .char_indices()
        .skip(1)
        .map(|(i, _)| i)
        .chain([s.len()])
        .take(10)
        .collect();
    ends.into_iter()
        .rev()
        .find_map(|end| emojis::get(&s[..end]).map(|e| (end, e)))
}

fn replace_emoji(text: &str, mode: EmojiMode) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if !c.is_ascii() {
            if let Some((len, emoji)) = match_emoji(rest) {
                out.push(' ');
                if mode == EmojiMode::Alias {
                    if let Some(alias) = emoji_alias(emoji) {
                        out.push_str(&alias);
                        out.push(' ');
                    }
                }
                rest = &rest[len..];
                continue;
            }
        }
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out
}

fn is_alias_token(token: &str) -> bool {
    token.len() > 2
        && token.starts_with(':')
        && token.ends_with(':')
        && token[1..token.len() - 1]
            .chars()
            .all(|c| c.is_ascii_lowercase() || c == '_')
}

/// Lowercases and strips URLs, mentions, emoji, digits, punctuation and
/// short words. Output words are separated by single spaces.
pub fn clean(text: &str, cfg: &CleaningConfig) -> String {
    let text = text.to_lowercase();
    let text = remove_urls(&text);
    let text = remove_mentions(&text);
    let text = if cfg.strip_hashes {
        text.replace('#', " ")
    } else {
        text
    };
    let text = replace_emoji(&text, cfg.emoji_mode);

    let min_len = cfg.min_word_len.max(1);
    let mut words: Vec<String> = Vec::new();
    for token in text.split_whitespace() {
        if cfg.emoji_mode == EmojiMode::Alias && is_alias_token(token) {
            if token.chars().count() >= min_len {
                words.push(token.to_string());
            }
            continue;
        }
        let (hashtag, body) = match token.strip_prefix('#') {
            Some(rest) if !cfg.strip_hashes => (true, rest),
            _ => (false, token),
        };
        let mapped: String = body
            .chars()
            .map(|c| if c.is_alphabetic() { c } else { ' ' })
            .collect();
        // A hashtag keeps its '#' only if the word follows it directly.
        let glued = hashtag && body.chars().next().is_some_and(char::is_alphabetic);
        for (i, word) in mapped.split_whitespace().enumerate() {
            let word = if glued && i == 0 {
                format!("#{word}")
            } else {
                word.to_string()
            };
            if word.chars().count() >= min_len {
                words.push(word);
            }
        }
    }
    words.join(" ")
}

/// Whitespace-free, nonempty tokens in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> Result<Self, TextError> {
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(TextError::InvalidToken(bad.clone()));
        }
        Ok(TokenSeq(tokens))
    }

    pub fn from_whitespace(text: &str) -> Self {
        TokenSeq(text.split_whitespace().map(str::to_string).collect())
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }
}

impl Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl TryFrom<Vec<String>> for TokenSeq {
    type Error = TextError;

    fn try_from(tokens: Vec<String>) -> Result<Self, TextError> {
        TokenSeq::new(tokens)
    }
}

impl From<TokenSeq> for Vec<String> {
    fn from(seq: TokenSeq) -> Self {
        seq.0
    }
}

impl<'a> FromIterator<&'a str> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        TokenSeq::from_whitespace(&iter.into_iter().collect::<Vec<_>>().join(" "))
    }
}

/// Token to lemma lookup table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LemmaMap(HashMap<String, String>);

impl LemmaMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        token: impl Into<String>,
        lemma: impl Into<String>,
    ) -> Result<(), TextError> {
        let (token, lemma) = (token.into(), lemma.into());
        if token.is_empty() || lemma.is_empty() {
            return Err(TextError::InvalidToken(format!("{token}\t{lemma}")));
        }
        self.0.insert(token, lemma);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&str> {
        self.0.get(token).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Parses `token<TAB>lemma` lines; blank lines are skipped.
    pub fn parse_tsv(content: &str) -> Result<Self, TextError> {
        let mut map = LemmaMap::new();
        for (i, line) in content.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |message: &str| TextError::MalformedLemma {
                line: i + 1,
                message: message.to_string(),
            };
            let (token, lemma) = line
                .split_once('\t')
                .ok_or_else(|| malformed("expected token<TAB>lemma"))?;
            let (token, lemma) = (token.trim(), lemma.trim());
            if token.is_empty() || lemma.is_empty() {
                return Err(malformed("empty token or lemma"));
            }
            if token.contains(char::is_whitespace) || lemma.contains(char::is_whitespace) {
                return Err(malformed("token and lemma must be single words"));
            }
            map.0.insert(token.to_string(), lemma.to_string());
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self, TextError> {
        let content = fs::read_to_string(path).map_err(|source| TextError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_tsv(&content)
    }
}

pub fn tokenize_lemmatize(text: &str, lemmas: &LemmaMap) -> TokenSeq {
    TokenSeq(
        text.split_whitespace()
            .map(|t| lemmas.get(t).unwrap_or(t).to_string())
            .collect(),
    )
}

pub fn truncate(tokens: &TokenSeq, limit: usize) -> TokenSeq {
    TokenSeq(tokens.iter().take(limit).cloned().collect())
}

/// Sentinel tokens and lengths for the long-text strategies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkingConfig {
    pub content_len: usize,
    pub bos: String,
    pub eos: String,
    pub pad: String,
    pub truncate_limit: usize,
    pub header_len: usize,
    pub part_len: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig {
            content_len: 510,
            bos: "<s>".into(),
            eos: "</s>".into(),
            pad: "<pad>".into(),
            truncate_limit: 512,
            header_len: 256,
            part_len: 256,
        }
    }
}

impl ChunkingConfig {
    pub fn validate(&self) -> Result<(), TextError> {
        let bad = |m: &str| Err(TextError::InvalidConfig(m.to_string()));
        if self.content_len == 0
            || self.truncate_limit == 0
            || self.header_len == 0
            || self.part_len == 0
        {
            return bad("lengths must be at least 1");
        }
        for s in [&self.bos, &self.eos, &self.pad] {
            if s.is_empty() || s.chars().any(char::is_whitespace) {
                return bad("sentinel tokens must be nonempty single tokens");
            }
        }
        if self.bos == self.eos || self.bos == self.pad || self.eos == self.pad {
            return bad("sentinel tokens must be pairwise distinct");
        }
        Ok(())
    }

    fn is_sentinel(&self, token: &str) -> bool {
        token == self.bos || token == self.eos || token == self.pad
    }
}

/// Splits into sentinel-wrapped chunks of identical length
/// `content_len + 2`; the last chunk is padded.
pub fn chunk(tokens: &TokenSeq, cfg: &ChunkingConfig) -> Result<Vec<TokenSeq>, TextError> {
    cfg.validate()?;
    if tokens.is_empty() {
        return Err(TextError::EmptyInput);
    }
    if let Some(t) = tokens.iter().find(|t| cfg.is_sentinel(t)) {
        return Err(TextError::SentinelCollision(t.clone()));
    }
    Ok(tokens
        .chunks(cfg.content_len)
        .map(|group| {
            let mut chunk = Vec::with_capacity(cfg.content_len + 2);
            chunk.push(cfg.bos.clone());
            chunk.extend(group.iter().cloned());
            chunk.resize(cfg.content_len + 1, cfg.pad.clone());
            chunk.push(cfg.eos.clone());
            TokenSeq(chunk)
        })
        .collect())
}

/// Header of `header_len` tokens followed by consecutive `part_len` parts.
pub fn augment_split(
    tokens: &TokenSeq,
    cfg: &ChunkingConfig,
) -> Result<(TokenSeq, Vec<TokenSeq>), TextError> {
    cfg.validate()?;
    if tokens.is_empty() {
        return Err(TextError::EmptyInput);
    }
    let split = cfg.header_len.min(tokens.len());
    let header = TokenSeq(tokens[..split].to_vec());
    let parts = tokens[split..]
        .chunks(cfg.part_len)
        .map(|p| TokenSeq(p.to_vec()))
        .collect();
    Ok((header, parts))
}
