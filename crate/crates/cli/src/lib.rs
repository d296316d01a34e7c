//! Experiment harness around the `tweetlink` library.
//!
//! Every subcommand reads one [`RunConfig`] (a TOML file plus command-line
//! overrides) and writes its artifacts into `out_dir`. Identical
//! configuration and seed give byte-identical artifacts.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;
use tweetlink::corpus::{synth_corpus, write_jsonl, Document, SynthSpec};
use tweetlink::linker::{calibrate_threshold, SimilarityMatrix};
use tweetlink::Persist;

pub use config::RunConfig;
use error::io_error;
pub use error::CliError;
use pipeline::{FeatureModel, Split};
use report::{emit_report, Cell, ReportFormat, Table};

#[derive(Debug, Parser)]
#[command(
    name = "tweetlink",
    version,
    about = "Link tweets and tweet cascades to news articles"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Any configuration key, e.g. `--set train.lr=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labeled corpus (documents.jsonl, pairs.jsonl).
    Synth {
        #[arg(long, default_value_t = 50)]
        articles: usize,
        #[arg(long, default_value_t = 4)]
        tweets_per_article: usize,
        #[arg(long, default_value_t = 2)]
        topics: usize,
        #[arg(long, default_value_t = 20)]
        vocab: usize,
        #[arg(long, default_value_t = 0)]
        replies: usize,
    },
    /// Validate inputs and write the normalized corpus and label set.
    Ingest,
    /// Clean and lemmatize every document (tokens.jsonl).
    Prep,
    /// Fit the TF-IDF or LDA model.
    Fit,
    /// Train the dual encoder on the training split.
    Train,
    /// Write the similarity matrix.
    Score,
    /// Find the F1-optimal threshold.
    Calibrate,
    /// Full pipeline: similarity matrix plus metrics report.
    Eval,
    /// Build reply/quote cascades (cascades.jsonl).
    Cascades,
    /// Masked AP of cascades cut to each size.
    SweepSize {
        /// Comma-separated, ascending; defaults to `sweep.sizes`.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
    },
    /// Hyperparameter search maximizing validation AP.
    SweepHp {
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
    },
    /// Re-emit a JSON report in another format.
    Report {
        /// Defaults to `<out_dir>/report.json`.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
    },
}

impl Cli {
    /// Configuration with `--seed`, `--out-dir` and `--set` applied over the
    /// config file.
    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut overrides = Vec::new();
        for raw in &self.overrides {
            let (k, v) = raw.split_once('=').ok_or_else(|| {
                CliError::ConfigInvalid(format!("`--set {raw}` is not KEY=VALUE"))
            })?;
            overrides.push((k.trim().to_string(), config::parse_value(v.trim())));
        }
        if let Some(seed) = self.seed {
            overrides.push(("seed".into(), toml::Value::Integer(seed as i64)));
        }
        if let Some(dir) = &self.out_dir {
            overrides.push((
                "out_dir".into(),
                toml::Value::String(dir.display().to_string()),
            ));
        }
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

#[derive(Serialize)]
struct TokenRow<'a> {
    id: &'a str,
    tokens: &'a [String],
}

fn one_row(columns: &[&str], cells: Vec<Cell>) -> Table {
    let mut t = Table::new(columns.iter().copied());
    t.push(cells);
    t
}

fn split_table(split: &Split) -> Table {
    let mut t = Table::new(["id", "kind", "part"]);
    let sets = [
        ("tweet", "train", &split.train_tweets),
        ("tweet", "val", &split.val_tweets),
        ("article", "train", &split.train_articles),
        ("article", "val", &split.val_articles),
    ];
    for (kind, part, ids) in sets {
        for id in ids {
            t.push(vec![id.as_str().into(), kind.into(), part.into()]);
        }
    }
    t
}

/// Reads a similarity matrix written by `score` or `eval`.
pub fn load_matrix(path: &std::path::Path) -> Result<SimilarityMatrix, CliError> {
    let file = fs::File::open(path).map_err(io_error(path))?;
    Ok(SimilarityMatrix::read_csv(std::io::BufReader::new(file))?)
}

/// Runs one subcommand and returns the files it wrote.
pub fn execute(command: &Command, cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let dir = || pipeline::create_out_dir(cfg).map(|d| d.to_path_buf());
    match command {
        Command::Synth {
            articles,
            tweets_per_article,
            topics,
            vocab,
            replies,
        } => {
            let fixture = synth_corpus(&SynthSpec {
                seed: cfg.seed,
                n_topics: *topics,
                n_articles: *articles,
                tweets_per_article: *tweets_per_article,
                vocab_per_topic: *vocab,
                replies_per_tweet: *replies,
                ..SynthSpec::default()
            });
            let d = dir()?;
            let out = vec![d.join("documents.jsonl"), d.join("pairs.jsonl")];
            write_jsonl(&out[0], &fixture.documents)?;
            write_jsonl(&out[1], &fixture.pairs)?;
            Ok(out)
        }
        Command::Ingest => {
            let corpus = pipeline::ingest(cfg)?;
            let d = dir()?;
            let out = vec![
                d.join("documents.jsonl"),
                d.join("pairs.jsonl"),
                d.join("ingest.json"),
            ];
            let docs: Vec<Document> = corpus
                .tweets
                .iter()
                .chain(&corpus.articles)
                .cloned()
                .collect();
            write_jsonl(&out[0], &docs)?;
            write_jsonl(&out[1], &corpus.pairs)?;
            let positives = corpus
                .pairs
                .iter()
                .filter(|p| p.label == tweetlink::corpus::PairLabel::Match)
                .count();
            let kappa = corpus.kappa.map_or(Cell::Float(f64::NAN), Cell::Float);
            let table = one_row(
                &["n_tweets", "n_articles", "n_pairs", "n_positive", "kappa"],
                vec![
                    corpus.tweets.len().into(),
                    corpus.articles.len().into(),
                    corpus.pairs.len().into(),
                    positives.into(),
                    kappa,
                ],
            );
            emit_report(&table, ReportFormat::Json, &out[2])?;
            Ok(out)
        }
        Command::Prep => {
            let prep = pipeline::prepare(cfg)?;
            let rows: Vec<TokenRow> = prep
                .corpus
                .tweets
                .iter()
                .chain(&prep.corpus.articles)
                .map(|d| TokenRow {
                    id: &d.id,
                    tokens: &prep.tokens[&d.id],
                })
                .collect();
            let path = dir()?.join("tokens.jsonl");
            write_jsonl(&path, &rows)?;
            Ok(vec![path])
        }
        Command::Fit => {
            let prep = pipeline::prepare(cfg)?;
            let feats = pipeline::featurize(&prep, cfg)?;
            let d = dir()?;
            match feats.model {
                FeatureModel::Tfidf(m) => {
                    let path = d.join("tfidf.json");
                    m.save(&path)?;
                    Ok(vec![path])
                }
                FeatureModel::Lda(m) => {
                    let path = d.join("lda.json");
                    m.save(&path)?;
                    Ok(vec![path])
                }
                FeatureModel::External => Err(CliError::ConfigInvalid(
                    "external embeddings have no model to fit".into(),
                )),
            }
        }
        Command::Train => {
            let prep = pipeline::prepare(cfg)?;
            let feats = pipeline::featurize(&prep, cfg)?;
            let c = &prep.corpus;
            let split = pipeline::split_ids(
                &c.labeled_tweet_ids(),
                &c.article_ids(),
                cfg.val_fraction,
                cfg.seed,
            )?;
            let trained = pipeline::train_on(&prep, &feats.set, &split, cfg)?;
            let d = dir()?;
            let out = vec![
                d.join("encoder.json"),
                d.join("loss.csv"),
                d.join("split.csv"),
            ];
            trained.save(&out[0])?;
            let mut loss = Table::new(["epoch", "loss"]);
            for (epoch, l) in trained.loss_trace.iter().enumerate() {
                loss.push(vec![epoch.into(), (*l).into()]);
            }
            emit_report(&loss, ReportFormat::Csv, &out[1])?;
            emit_report(&split_table(&split), ReportFormat::Csv, &out[2])?;
            Ok(out)
        }
        Command::Score => {
            let prep = pipeline::prepare(cfg)?;
            let scored = pipeline::score(&prep, cfg)?;
            let path = dir()?.join("similarity.csv");
            pipeline::write_matrix(&scored.sim, &path)?;
            Ok(vec![path])
        }
        Command::Calibrate => {
            let prep = pipeline::prepare(cfg)?;
            let scored = pipeline::score(&prep, cfg)?;
            let cal = calibrate_threshold(&scored.sim, &scored.gt)?;
            let path = dir()?.join("calibration.json");
            emit_report(
                &one_row(
                    &["threshold", "f1"],
                    vec![cal.threshold.into(), cal.f1.into()],
                ),
                ReportFormat::Json,
                &path,
            )?;
            Ok(vec![path])
        }
        Command::Eval => Ok(pipeline::run_pipeline(cfg)?.1),
        Command::Cascades => {
            let prep = pipeline::prepare(cfg)?;
            let records: Vec<_> = pipeline::cascades(&prep)?
                .iter()
                .map(|c| c.export())
                .collect();
            let path = dir()?.join("cascades.jsonl");
            write_jsonl(&path, &records)?;
            Ok(vec![path])
        }
        Command::SweepSize { sizes, format } => {
            let sizes = if sizes.is_empty() {
                &cfg.sweep.sizes
            } else {
                sizes
            };
            let rows = pipeline::sweep_size(cfg, sizes)?;
            let path = dir()?.join(format!("sweep_size.{}", format.extension()));
            emit_report(&pipeline::sweep_table(&rows), *format, &path)?;
            Ok(vec![path])
        }
        Command::SweepHp { format } => {
            let outcome = pipeline::sweep_hyperparams(cfg)?;
            let d = dir()?;
            let out = vec![
                d.join(format!("sweep_hp.{}", format.extension())),
                d.join("best_config.toml"),
            ];
            emit_report(&outcome.table(), *format, &out[0])?;
            fs::write(&out[1], outcome.best_config.to_toml()).map_err(io_error(&out[1]))?;
            Ok(out)
        }
        Command::Report { input, format } => {
            let input = input
                .clone()
                .unwrap_or_else(|| cfg.out_dir.join("report.json"));
            let text = fs::read_to_string(&input).map_err(|e| {
                CliError::ConfigInvalid(format!("cannot read {}: {e}", input.display()))
            })?;
            let table = Table::from_json(&text)?;
            let stem = input
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("report");
            let path = dir()?.join(format!("{stem}.{}", format.extension()));
            emit_report(&table, *format, &path)?;
            Ok(vec![path])
        }
    }
}

/// Parses nothing, runs everything: the body of the binary.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let cfg = cli.run_config()?;
    execute(&cli.command, &cfg)
}
