//! Run configuration: one TOML document, overridable key by key.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};
use tweetlink::cascade::AggregationFn;
use tweetlink::contrast::{LongTextStrategy, TrainConfig};
use tweetlink::textprep::{ChunkingConfig, CleaningConfig};
use tweetlink::vectorize::LdaConfig;

use crate::error::CliError;

/// How similarities are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Cosine of TF-IDF vectors.
    #[default]
    Tfidf,
    /// Cosine of inferred topic proportions.
    Lda,
    /// Cosine in the joint space of a dual encoder trained on `features`.
    Dual,
}

/// Input representation of the dual encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    #[default]
    Tfidf,
    Lda,
    /// Vectors read from `paths.embeddings`.
    External,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub documents: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub lemmas: Option<PathBuf>,
    pub keywords: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Cascade sizes for `sweep-size`, strictly ascending.
    pub sizes: Vec<usize>,
    /// Grid points: tables of (possibly dotted) keys overriding the run
    /// configuration.
    pub grid: Vec<Table>,
    /// Number of random points drawn from `space` after the grid.
    pub budget: usize,
    /// Candidate values per key for random search.
    pub space: BTreeMap<String, Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; LDA and training seeds are taken from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub model: ModelKind,
    pub features: FeatureKind,
    pub strategy: LongTextStrategy,
    pub aggregation: AggregationFn,
    /// Decision threshold; calibrated for best F1 when absent.
    pub threshold: Option<f64>,
    /// Annotator agreement needed for a match when labels come from
    /// annotations.
    pub consensus_threshold: f64,
    /// Share of labeled tweets and of articles held out for validation.
    pub val_fraction: f64,
    /// Fold-in sweeps when inferring LDA topic proportions.
    pub infer_iters: usize,
    pub paths: Paths,
    pub cleaning: CleaningConfig,
    pub chunking: ChunkingConfig,
    pub lda: LdaConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            model: ModelKind::default(),
            features: FeatureKind::default(),
            strategy: LongTextStrategy::default(),
            aggregation: AggregationFn::default(),
            threshold: None,
            consensus_threshold: 0.5,
            val_fraction: 0.5,
            infer_iters: 50,
            paths: Paths::default(),
            cleaning: CleaningConfig::default(),
            chunking: ChunkingConfig::default(),
            lda: LdaConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// Parses a command-line value as a TOML value, falling back to a bare
/// string (`model=dual` and `model="dual"` are the same).
pub fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Sets `key` (dot-separated path) in `root`, creating tables on the way.
pub fn set_dotted(root: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::ConfigInvalid(format!("bad key `{key}`")));
    }
    let last = parts.pop().expect("split yields at least one part");
    let mut table = root;
    for part in parts {
        let entry = table
            .entry(part)
            .or_insert_with(|| Value::Table(Table::new()));
        table = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(CliError::ConfigInvalid(format!(
                    "`{part}` in `{key}` is not a table"
                )))
            }
        };
    }
    match (table.get_mut(last), value) {
        (Some(Value::Table(existing)), Value::Table(incoming)) => {
            for (k, v) in incoming {
                set_dotted(existing, &k, v)?;
            }
        }
        (_, value) => {
            table.insert(last.to_string(), value);
        }
    }
    Ok(())
}

impl RunConfig {
    /// Reads the optional config file, applies `key=value` overrides in
    /// order and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<Self, CliError> {
        let mut root = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| {
                    CliError::ConfigInvalid(format!("cannot read {}: {e}", p.display()))
                })?;
                toml::from_str::<Table>(&text)
                    .map_err(|e| CliError::ConfigInvalid(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for (key, value) in overrides {
            set_dotted(&mut root, key, value.clone())?;
        }
        Self::from_table(root)
    }

    fn from_table(root: Table) -> Result<Self, CliError> {
        let cfg: RunConfig = Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::ConfigInvalid(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_table(&self) -> Table {
        match Value::try_from(self).expect("configuration serializes to TOML") {
            Value::Table(t) => t,
            _ => unreachable!("a struct serializes to a table"),
        }
    }

    /// Copy with every key of `point` applied as an override.
    pub fn with_overrides(&self, point: &Table) -> Result<Self, CliError> {
        let mut root = self.to_table();
        for (key, value) in point {
            set_dotted(&mut root, key, value.clone())?;
        }
        Self::from_table(root)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::ConfigInvalid(m));
        if !(0.0..=1.0).contains(&self.consensus_threshold) {
            return bad(format!(
                "consensus_threshold must be in [0, 1], got {}",
                self.consensus_threshold
            ));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!(
                "val_fraction must be in (0, 1), got {}",
                self.val_fraction
            ));
        }
        if let Some(t) = self.threshold {
            if !t.is_finite() {
                return bad("threshold must be finite".into());
            }
        }
        if self.infer_iters == 0 {
            return bad("infer_iters must be at least 1".into());
        }
        self.chunking
            .validate()
            .map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
        self.train
            .validate()
            .map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
        Ok(())
    }

    /// LDA settings with the master seed applied.
    pub fn lda_config(&self) -> LdaConfig {
        LdaConfig {
            seed: self.seed,
            ..self.lda.clone()
        }
    }

    /// Training settings with the master seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// Existing file behind an optional path setting.
    pub fn require_path<'a>(
        &self,
        name: &str,
        path: &'a Option<PathBuf>,
    ) -> Result<&'a Path, CliError> {
        let path = path
            .as_deref()
            .ok_or_else(|| CliError::ConfigInvalid(format!("paths.{name} is not set")))?;
        if !path.exists() {
            return Err(CliError::ConfigInvalid(format!(
                "paths.{name}: {} does not exist",
                path.display()
            )));
        }
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = RunConfig::load(
            None,
            &[
                ("model".into(), parse_value("dual")),
                ("train.lr".into(), parse_value("0.25")),
                ("paths.documents".into(), parse_value("docs.jsonl")),
                ("threshold".into(), parse_value("0.4")),
            ],
        )
        .unwrap();
        assert_eq!(cfg.model, ModelKind::Dual);
        assert_eq!(cfg.train.lr, 0.25);
        assert_eq!(
            cfg.paths.documents.as_deref(),
            Some(Path::new("docs.jsonl"))
        );
        assert_eq!(cfg.threshold, Some(0.4));
    }

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "seed = 3\nmodel = \"lda\"\n[lda]\nk = 4\n").unwrap();
        let cfg = RunConfig::load(Some(&path), &[("seed".into(), parse_value("9"))]).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.model, ModelKind::Lda);
        assert_eq!(cfg.lda.k, 4);
        assert_eq!(cfg.lda_config().seed, 9);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        for (k, v) in [
            ("modle", "dual"),
            ("model", "bert"),
            ("val_fraction", "1.0"),
            ("train.margin", "2"),
        ] {
            let err = RunConfig::load(None, &[(k.into(), parse_value(v))]).unwrap_err();
            assert!(matches!(err, CliError::ConfigInvalid(_)), "{k}={v}: {err}");
        }
    }

    #[test]
    fn grid_points_apply_dotted_and_nested_keys() {
        let base = RunConfig::default();
        let point: Table = toml::from_str("\"train.epochs\" = 7\nlda = { k = 3 }").unwrap();
        let cfg = base.with_overrides(&point).unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.lda.k, 3);
        assert_eq!(cfg.lda.beta, base.lda.beta);
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig {
            threshold: Some(0.3),
            ..RunConfig::default()
        };
        cfg.sweep
            .grid
            .push(toml::from_str("\"train.lr\" = 0.5").unwrap());
        let back = RunConfig::load(None, &[])
            .unwrap()
            .with_overrides(&toml::from_str(&cfg.to_toml()).unwrap());
        assert_eq!(back.unwrap(), cfg);
    }

    #[test]
    fn parse_value_falls_back_to_string() {
        assert_eq!(parse_value("12"), Value::Integer(12));
        assert_eq!(parse_value("out/run 1"), Value::String("out/run 1".into()));
        assert_eq!(parse_value("\"x\""), Value::String("x".into()));
    }
}
