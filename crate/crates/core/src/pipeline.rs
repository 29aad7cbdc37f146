//! The end-to-end chain: load, split, augment, train, predict, rank, evaluate.
//!
//! Every step reads its inputs from files named in a [`PipelineConfig`] and
//! writes its outputs to `paths.output_dir`:
//!
//! | file                 | contents                                      |
//! |----------------------|-----------------------------------------------|
//! | `checkpoint.bin`     | trained encoder                               |
//! | `history.tsv`        | per-epoch training record                     |
//! | `augmented.tsv`      | training split after augmentation             |
//! | `augment_report.txt` | augmentation counts, skips and warnings       |
//! | `scored.tsv`         | per-tweet probabilities and score             |
//! | `run.tsv`            | ranked run                                    |
//! | `qrels.tsv`          | judgments used for evaluation                 |
//! | `report.tsv`         | metric report                                 |

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::augment::{
    guard_splits, upsample_positive, AugmentError, AugmentReport, CachingProvider, HttpProvider,
    IdentityProvider, MockProvider, ProviderError, TranslationProvider,
};
use crate::config::{ConfigError, PipelineConfig, ProviderKind, SchemeName, DEV_SPLIT};
use crate::corpus::{load_dataset, save_dataset, split, CorpusError, Dataset, Origin, Schema};
use crate::metrics::{evaluate_run, load_qrels, MetricReport, MetricsError, RelevanceJudgments};
use crate::model::{init_weights, load_checkpoint, save_checkpoint, EncoderConfig, ModelError};
use crate::rank::{rank_topics, write_run, write_scored, RankError, RankedRun, ScoredTweet};
use crate::rng::{derive_seed, seeded, unit};
use crate::tokenizer::{load_merges, load_vocab, Tokenizer, TokenizerError};
use crate::train::{fine_tune, grid_search, predict_logits, write_history, TrainConfig, TrainError, TrainHistory};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("translation provider failed for all {0} tweets")]
    ProviderFailure(usize),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, PipelineError>;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| PipelineError::Output {
        path: path.display().to_string(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| PipelineError::Output {
        path: dir.display().to_string(),
        source,
    })
}

pub fn load_tokenizer(cfg: &PipelineConfig) -> Result<Tokenizer> {
    let vocab = load_vocab(&cfg.paths.vocab, cfg.tokenizer.scheme.into())?;
    Ok(match cfg.tokenizer.scheme {
        SchemeName::Wordpiece => Tokenizer::wordpiece(vocab),
        SchemeName::Bpe => {
            let path = cfg.paths.merges.as_ref().ok_or_else(|| {
                ConfigError::Invalid("the bpe scheme needs paths.merges".into())
            })?;
            Tokenizer::Bpe {
                vocab,
                merges: load_merges(path)?,
                mode: cfg.tokenizer.bpe_mode.into(),
            }
        }
    })
}

/// The configured encoder, with `vocab_size = 0` filled in from the tokenizer.
pub fn model_config(cfg: &PipelineConfig, tokenizer: &Tokenizer) -> Result<EncoderConfig> {
    let mut model = cfg.model.clone();
    if model.vocab_size == 0 {
        model.vocab_size = tokenizer.vocab().len();
    }
    model.validate()?;
    Ok(model)
}

pub fn build_provider(cfg: &PipelineConfig) -> Result<Box<dyn TranslationProvider>> {
    fn cached<P: TranslationProvider + 'static>(
        inner: P,
        cache: Option<&PathBuf>,
    ) -> Result<Box<dyn TranslationProvider>> {
        Ok(match cache {
            Some(path) => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    ensure_dir(dir)?;
                }
                Box::new(CachingProvider::with_file(inner, path).map_err(AugmentError::from)?)
            }
            None => Box::new(CachingProvider::in_memory(inner)),
        })
    }
    let cache = cfg.paths.cache.as_ref();
    match cfg.augment.provider {
        ProviderKind::Identity => cached(IdentityProvider, cache),
        ProviderKind::Mock => {
            let table = cfg.paths.translation_table.as_ref().ok_or_else(|| {
                ConfigError::Invalid("the mock provider needs paths.translation_table".into())
            })?;
            cached(MockProvider::load(table).map_err(AugmentError::from)?, cache)
        }
        ProviderKind::Http => cached(HttpProvider::new(cfg.augment.http.clone()), cache),
    }
}

pub fn load_labeled(path: &Path) -> Result<Dataset> {
    let dataset = load_dataset(path, &Schema::default())?;
    if !dataset.is_labeled() {
        return Err(CorpusError::Contract(format!("{} has no labels", path.display())).into());
    }
    Ok(dataset)
}

/// Upsamples positives into the training split. The default protocol
/// augments the training split only; with `allow_leakage` the validation
/// positives are translated too and their copies land in training.
pub fn augment_training_split(
    cfg: &PipelineConfig,
    splits: &mut [(String, Dataset)],
    provider: &dyn TranslationProvider,
) -> Result<AugmentReport> {
    let s = &cfg.split;
    let pick = |name: &str| splits.iter().position(|(n, _)| n == name).expect("validated split name");
    let (train_i, val_i) = (pick(&s.train), pick(&s.validation));
    let mut source = splits[train_i].1.clone();
    if cfg.augment.allow_leakage {
        source.tweets.extend(splits[val_i].1.tweets.iter().cloned());
    }
    let (augmented, mut report) =
        upsample_positive(&source, &cfg.augment.strategy(), provider, &cfg.augment.options())?;
    if report.all_failed() {
        return Err(PipelineError::ProviderFailure(report.attempted));
    }
    let train = &mut splits[train_i].1;
    train.tweets.extend(
        augmented
            .tweets
            .into_iter()
            .filter(|t| t.origin == Origin::Augmented),
    );
    train.validate()?;
    report.after = crate::corpus::class_balance(train)?;
    let outcome = guard_splits(splits, &s.train, cfg.augment.allow_leakage)?;
    report.warnings.extend(outcome.warnings);
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EncoderConfig,
    pub history: TrainHistory,
    pub train_config: TrainConfig,
    pub augment: Option<AugmentReport>,
    pub splits: Vec<(String, Dataset)>,
}

/// Load, split, optionally augment, then train (or grid-search) and write
/// the checkpoint and history.
pub fn train(cfg: &PipelineConfig, grid: Option<&[TrainConfig]>) -> Result<TrainOutcome> {
    cfg.validate()?;
    ensure_dir(&cfg.paths.output_dir)?;
    let dataset = load_labeled(&cfg.paths.dataset)?;
    let mut splits = split(&dataset, &cfg.split_spec())?;
    if let Some(dev) = &cfg.paths.dev {
        splits.push((DEV_SPLIT.to_string(), load_dataset(dev, &Schema::default())?));
    }
    let augment = if cfg.augment.enabled {
        let provider = build_provider(cfg)?;
        let report = augment_training_split(cfg, &mut splits, provider.as_ref())?;
        let train = &splits.iter().find(|(n, _)| *n == cfg.split.train).unwrap().1;
        save_dataset(train, cfg.paths.output_dir.join("augmented.tsv"))?;
        write_file(&cfg.paths.output_dir.join("augment_report.txt"), report.render())?;
        Some(report)
    } else {
        None
    };
    let find = |name: &str| &splits.iter().find(|(n, _)| n == name).unwrap().1;
    let (train_set, val_set) = (find(&cfg.split.train), find(&cfg.split.validation));

    let tokenizer = load_tokenizer(cfg)?;
    let model = model_config(cfg, &tokenizer)?;
    let init = || init_weights(&model, cfg.init_seed()).map_err(TrainError::from);
    let (weights, history, train_config) = match grid {
        Some(grid) => {
            let grid: Vec<TrainConfig> = grid
                .iter()
                .map(|g| TrainConfig { seed: cfg.train_config().seed, ..g.clone() })
                .collect();
            let result = grid_search(&grid, &model, train_set, val_set, &tokenizer, init)?;
            let history = result.histories[result.best_index].clone();
            (result.best_weights, history, result.best_config)
        }
        None => {
            let tc = cfg.train_config();
            let (w, h) = fine_tune(&init()?, &model, train_set, val_set, &tokenizer, &tc)?;
            (w, h, tc)
        }
    };
    save_checkpoint(&model, &weights, cfg.checkpoint_path())?;
    let mut buf = Vec::new();
    write_history(&history, &mut buf).expect("writing to memory");
    write_file(&cfg.paths.output_dir.join("history.tsv"), buf)?;
    Ok(TrainOutcome {
        model,
        history,
        train_config,
        augment,
        splits,
    })
}

/// Scores every tweet of `dataset` with the checkpoint named in the config.
pub fn predict(cfg: &PipelineConfig, dataset: &Dataset) -> Result<Vec<ScoredTweet>> {
    let tokenizer = load_tokenizer(cfg)?;
    let (model, weights) = load_checkpoint(cfg.checkpoint_path())?;
    let logits = predict_logits(&weights, &model, &tokenizer, dataset)?;
    Ok(dataset
        .tweets
        .iter()
        .zip(logits)
        .map(|(t, l)| ScoredTweet::from_logits(&t.topic_id, &t.tweet_id, l))
        .collect())
}

/// Judgments taken from a labeled dataset's own labels.
pub fn qrels_from_dataset(dataset: &Dataset) -> Result<RelevanceJudgments> {
    let mut q = RelevanceJudgments::default();
    for t in &dataset.tweets {
        let label = t.label.ok_or_else(|| {
            CorpusError::Contract(format!("tweet {} has no label for qrels", t.tweet_id))
        })?;
        q.insert(&t.topic_id, &t.tweet_id, label)?;
    }
    Ok(q)
}

/// Uniform random scores in [-1, 1): the baseline ranker.
pub fn random_scores(dataset: &Dataset, seed: u64) -> Vec<ScoredTweet> {
    let mut rng = seeded(derive_seed(seed, 3));
    dataset
        .tweets
        .iter()
        .map(|t| {
            let score = 2.0 * unit(&mut rng) - 1.0;
            ScoredTweet {
                topic_id: t.topic_id.clone(),
                tweet_id: t.tweet_id.clone(),
                p_negative: (1.0 - score) / 2.0,
                p_positive: (1.0 + score) / 2.0,
                score,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub outcome: TrainOutcome,
    pub run: RankedRun,
    pub report: MetricReport,
    pub baseline: MetricReport,
    pub output_dir: PathBuf,
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineSummary> {
    let outcome = train(cfg, None)?;
    let out = &cfg.paths.output_dir;
    let eval_set = outcome
        .splits
        .iter()
        .find(|(n, _)| *n == cfg.split.evaluate)
        .map(|(_, d)| d.clone())
        .expect("validated split name");

    let scored = predict(cfg, &eval_set)?;
    let mut buf = Vec::new();
    write_scored(&scored, &mut buf).expect("writing to memory");
    write_file(&out.join("scored.tsv"), buf)?;

    let run = rank_topics(&scored, &cfg.run_id)?;
    let mut buf = Vec::new();
    write_run(&run, &mut buf).expect("writing to memory");
    write_file(&out.join("run.tsv"), buf)?;

    let qrels = match &cfg.paths.qrels {
        Some(path) => load_qrels(path)?,
        None => qrels_from_dataset(&eval_set)?,
    };
    write_file(&out.join("qrels.tsv"), qrels.to_tsv())?;

    let options = cfg.metrics.ap_options();
    let report = evaluate_run(&run, &qrels, options)?;
    write_file(&out.join("report.tsv"), report.render())?;

    let baseline_run = rank_topics(&random_scores(&eval_set, cfg.seed), "random")?;
    let baseline = evaluate_run(&baseline_run, &qrels, options)?;
    Ok(PipelineSummary {
        outcome,
        run,
        report,
        baseline,
        output_dir: out.clone(),
    })
}

/// Process exit code for an error: 3 for translation provider failure, 1 for
/// output, cache and numerical failures, 2 for bad input or configuration.
pub fn exit_code(err: &PipelineError) -> i32 {
    match err {
        PipelineError::ProviderFailure(_)
        | PipelineError::Augment(AugmentError::Provider(ProviderError::Request(_)))
        | PipelineError::Augment(AugmentError::Provider(ProviderError::Response(_))) => 3,
        PipelineError::Output { .. } => 1,
        PipelineError::Augment(AugmentError::Provider(ProviderError::Cache(_))) => 1,
        PipelineError::Model(ModelError::Io(_)) => 2,
        PipelineError::Train(TrainError::NonFiniteGradient(_)) => 1,
        _ => 2,
    }
}
