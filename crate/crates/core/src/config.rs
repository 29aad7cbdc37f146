//! Pipeline configuration, read from a TOML file.
//!
//! Top-level keys `run_id` and `seed`, then sections `[paths]`,
//! `[tokenizer]`, `[model]`, `[train]`, `[split]`, `[augment]` and
//! `[metrics]`. Relative paths resolve against the config file's directory.
//! See `assets/pipeline.toml` for a complete example.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{AugmentOptions, AugmentStrategy, HttpProviderConfig, StrategyKind};
use crate::corpus::SplitSpec;
use crate::metrics::{ApNormalization, ApOptions};
use crate::model::EncoderConfig;
use crate::tokenizer::{BpeMode, Scheme};
use crate::train::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

/// Split name under which `paths.dev` is added.
pub const DEV_SPLIT: &str = "dev";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: PathBuf,
    pub vocab: PathBuf,
    pub merges: Option<PathBuf>,
    /// Word-substitution table for the mock translation provider.
    pub translation_table: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    /// Gold judgments; when absent they are derived from the evaluation split's labels.
    pub qrels: Option<PathBuf>,
    /// Separately distributed development set, added as a split named
    /// [`DEV_SPLIT`] that `split.evaluate` may select.
    pub dev: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/checkpoint.bin`.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BpeModeName {
    #[default]
    Char,
    Byte,
}

impl From<BpeModeName> for BpeMode {
    fn from(m: BpeModeName) -> Self {
        match m {
            BpeModeName::Char => BpeMode::Char,
            BpeModeName::Byte => BpeMode::Byte,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    #[default]
    Wordpiece,
    Bpe,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::Wordpiece => Scheme::WordPiece,
            SchemeName::Bpe => Scheme::Bpe,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSection {
    pub scheme: SchemeName,
    pub bpe_mode: BpeModeName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub names: Vec<String>,
    pub fractions: Vec<f64>,
    pub stratified: bool,
    pub train: String,
    pub validation: String,
    /// Split that is scored, ranked and evaluated.
    pub evaluate: String,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            names: vec!["train".into(), "val".into()],
            fractions: vec![0.8, 0.2],
            stratified: true,
            train: "train".into(),
            validation: "val".into(),
            evaluate: "val".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Mock,
    Identity,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub enabled: bool,
    pub strategy: StrategyKind,
    pub source_lang: String,
    pub pivot_lang: String,
    pub provider: ProviderKind,
    /// Augment training and validation positives into the training split,
    /// and downgrade the leakage guard to a warning.
    pub allow_leakage: bool,
    pub max_retries: usize,
    pub concurrency: usize,
    pub http: HttpProviderConfig,
}

impl Default for AugmentSection {
    fn default() -> Self {
        let s = AugmentStrategy::default();
        let o = AugmentOptions::default();
        AugmentSection {
            enabled: false,
            strategy: s.kind,
            source_lang: s.source_lang,
            pivot_lang: s.pivot_lang,
            provider: ProviderKind::Mock,
            allow_leakage: false,
            max_retries: o.max_retries,
            concurrency: o.concurrency,
            http: HttpProviderConfig::default(),
        }
    }
}

impl AugmentSection {
    pub fn strategy(&self) -> AugmentStrategy {
        AugmentStrategy::new(self.strategy, &self.source_lang, &self.pivot_lang)
    }

    pub fn options(&self) -> AugmentOptions {
        AugmentOptions {
            max_retries: self.max_retries,
            concurrency: self.concurrency,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub ap_cutoff: Option<usize>,
    /// Normalize truncated AP by `min(R, cutoff)` instead of `R`.
    pub min_relevant_cutoff: bool,
}

impl MetricsSection {
    pub fn ap_options(&self) -> ApOptions {
        ApOptions {
            cutoff: self.ap_cutoff,
            normalization: if self.min_relevant_cutoff {
                ApNormalization::MinRelevantCutoff
            } else {
                ApNormalization::TotalRelevant
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub run_id: String,
    /// Governs the split, weight initialization and training order.
    pub seed: u64,
    pub paths: Paths,
    pub tokenizer: TokenizerSection,
    /// `vocab_size = 0` takes the size from the vocabulary file.
    pub model: EncoderConfig,
    /// `train.seed` is ignored; the top-level seed is used instead.
    pub train: TrainConfig,
    pub split: SplitSection,
    pub augment: AugmentSection,
    pub metrics: MetricsSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            run_id: "run".into(),
            seed: 0,
            paths: Paths::default(),
            tokenizer: TokenizerSection::default(),
            model: EncoderConfig {
                vocab_size: 0,
                ..EncoderConfig::desk(0)
            },
            train: TrainConfig::default(),
            split: SplitSection::default(),
            augment: AugmentSection::default(),
            metrics: MetricsSection::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if !p.as_os_str().is_empty() && p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    /// Reads, parses and resolves relative paths; does not validate.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        resolve(base, &mut p.dataset);
        resolve(base, &mut p.vocab);
        resolve(base, &mut p.output_dir);
        for opt in [
            &mut p.merges,
            &mut p.translation_table,
            &mut p.cache,
            &mut p.qrels,
            &mut p.dev,
            &mut p.checkpoint,
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, opt);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.paths
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.paths.output_dir.join("checkpoint.bin"))
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            fractions: self
                .split
                .names
                .iter()
                .cloned()
                .zip(self.split.fractions.iter().copied())
                .collect(),
            seed: self.seed,
            stratified: self.split.stratified,
        }
    }

    /// Training settings with the pipeline seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: crate::rng::derive_seed(self.seed, 2),
            ..self.train.clone()
        }
    }

    pub fn init_seed(&self) -> u64 {
        crate::rng::derive_seed(self.seed, 1)
    }

    /// Structural checks plus existence of every referenced input file.
    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.run_id.is_empty() || self.run_id.chars().any(char::is_whitespace) {
            return invalid(format!("run_id must be non-empty without whitespace, got `{}`", self.run_id));
        }
        let s = &self.split;
        if s.names.len() != s.fractions.len() {
            return invalid("split.names and split.fractions differ in length".into());
        }
        if self.paths.dev.is_some() && s.names.iter().any(|n| n == DEV_SPLIT) {
            return invalid(format!("split name `{DEV_SPLIT}` is reserved for paths.dev"));
        }
        for (what, name) in [("train", &s.train), ("validation", &s.validation), ("evaluate", &s.evaluate)] {
            let dev_ok = what != "train" && self.paths.dev.is_some() && name == DEV_SPLIT;
            if !s.names.contains(name) && !dev_ok {
                return invalid(format!("split.{what} = `{name}` is not one of split.names"));
            }
        }
        if s.train == s.validation {
            return invalid("training and validation splits must differ".into());
        }
        self.split_spec()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.train
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.augment.enabled {
            self.augment
                .strategy()
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        let mut required: Vec<(&str, &Path)> = vec![
            ("paths.dataset", &self.paths.dataset),
            ("paths.vocab", &self.paths.vocab),
        ];
        if self.tokenizer.scheme == SchemeName::Bpe {
            match &self.paths.merges {
                Some(m) => required.push(("paths.merges", m)),
                None => return invalid("the bpe scheme needs paths.merges".into()),
            }
        }
        if self.augment.enabled && self.augment.provider == ProviderKind::Mock {
            match &self.paths.translation_table {
                Some(t) => required.push(("paths.translation_table", t)),
                None => return invalid("the mock provider needs paths.translation_table".into()),
            }
        }
        if self.augment.enabled && self.augment.provider == ProviderKind::Http && self.augment.http.endpoint.is_empty() {
            return invalid("the http provider needs augment.http.endpoint".into());
        }
        if let Some(q) = &self.paths.qrels {
            required.push(("paths.qrels", q));
        }
        if let Some(d) = &self.paths.dev {
            required.push(("paths.dev", d));
        }
        for (key, path) in required {
            if !path.is_file() {
                return invalid(format!("{key}: file {} does not exist", path.display()));
            }
        }
        if self.paths.output_dir.as_os_str().is_empty() {
            return invalid("paths.output_dir is required".into());
        }
        Ok(())
    }
}

/// A list of training configurations, written as `[[config]]` tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub config: Vec<TrainConfig>,
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<Vec<TrainConfig>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let grid: GridFile = toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    if grid.config.is_empty() {
        return Err(ConfigError::Invalid(format!("{}: grid is empty", path.display())));
    }
    Ok(grid.config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_toml() {
        let cfg = PipelineConfig {
            run_id: "demo".into(),
            seed: 9,
            ..Default::default()
        };
        assert_eq!(PipelineConfig::parse(&cfg.to_toml(), "x").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = PipelineConfig::parse("[train]\nepochz = 3\n", "cfg.toml").unwrap_err();
        assert!(err.to_string().contains("epochz"), "{err}");
    }

    #[test]
    fn validation_messages() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("d.tsv");
        let vocab = dir.path().join("v.txt");
        std::fs::write(&data, "x").unwrap();
        std::fs::write(&vocab, "x").unwrap();
        let ok = PipelineConfig {
            paths: Paths {
                dataset: data,
                vocab,
                output_dir: dir.path().join("out"),
                ..Default::default()
            },
            ..Default::default()
        };
        ok.validate().unwrap();

        let bad = PipelineConfig { run_id: "a b".into(), ..ok.clone() };
        assert!(bad.validate().unwrap_err().to_string().contains("run_id"));

        let mut bad = ok.clone();
        bad.paths.dataset = dir.path().join("missing.tsv");
        assert!(bad.validate().unwrap_err().to_string().contains("missing.tsv"));

        let mut bad = ok.clone();
        bad.split.evaluate = "holdout".into();
        assert!(bad.validate().unwrap_err().to_string().contains("holdout"));

        let mut bad = ok.clone();
        bad.augment.enabled = true;
        assert!(bad.validate().unwrap_err().to_string().contains("translation_table"));

        let mut bad = ok.clone();
        bad.tokenizer.scheme = SchemeName::Bpe;
        assert!(bad.validate().unwrap_err().to_string().contains("merges"));

        let mut dev = ok.clone();
        dev.split.evaluate = DEV_SPLIT.into();
        assert!(dev.validate().is_err());
        dev.paths.dev = Some(dir.path().join("d.tsv"));
        dev.validate().unwrap();
        dev.split.train = DEV_SPLIT.into();
        assert!(dev.validate().is_err());

        let mut clash = ok;
        clash.paths.dev = Some(dir.path().join("d.tsv"));
        clash.split.names = vec!["train".into(), DEV_SPLIT.into()];
        clash.split.validation = DEV_SPLIT.into();
        assert!(clash.validate().unwrap_err().to_string().contains("reserved"));
    }

    #[test]
    fn relative_paths_resolve_against_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.toml");
        std::fs::write(&path, "[paths]\ndataset = \"data/c.tsv\"\noutput_dir = \"/abs/out\"\n").unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.paths.dataset, dir.path().join("data/c.tsv"));
        assert_eq!(cfg.paths.output_dir, PathBuf::from("/abs/out"));
        assert_eq!(cfg.checkpoint_path(), PathBuf::from("/abs/out/checkpoint.bin"));
    }

    #[test]
    fn grid_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.toml");
        std::fs::write(&path, "[[config]]\nlearning_rate = 1e-3\n\n[[config]]\nlearning_rate = 3e-4\nepochs = 4\n").unwrap();
        let grid = load_grid(&path).unwrap();
        assert_eq!(grid.len(), 2);
        assert_eq!(grid[1].epochs, 4);
        assert_eq!(grid[0].batch_size, 32);
        std::fs::write(&path, "config = []\n").unwrap();
        assert!(load_grid(&path).is_err());
    }
}
