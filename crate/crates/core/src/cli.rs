//! Command-line front end.
//!
//! Exit codes: 0 success, 1 internal error, 2 invalid input or
//! configuration, 3 translation provider failure.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::augment::{upsample_positive, AugmentError, CachingProvider, MockProvider, StrategyKind};
use crate::config::{load_grid, ConfigError, PipelineConfig};
use crate::corpus::{class_balance, load_dataset, save_dataset, Schema};
use crate::metrics::{evaluate_run, load_qrels, ApNormalization, ApOptions};
use crate::pipeline::{self, exit_code, PipelineError, Result};
use crate::rank::{load_run, load_scored, rank_topics, write_run, write_scored};
use crate::synthetic;
use crate::tokenizer::overlap::{vocab_overlap, Normalizer};
use crate::tokenizer::{load_vocab, write_vocab, Scheme};

const EXAMPLE_CONFIG: &str = include_str!("../assets/pipeline.toml");
const EXAMPLE_GRID: &str = include_str!("../assets/grid.toml");

#[derive(Debug, Parser)]
#[command(name = "checkworthy", version, about = "Check-worthiness classification, ranking and evaluation")]
pub struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Only log errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Class balance and length statistics of a dataset.
    Stats { dataset: PathBuf },
    /// Fraction of a corpus's tokens that appear in a vocabulary.
    AnalyzeVocab(AnalyzeArgs),
    /// Upsample the positive class by translation.
    Augment(AugmentArgs),
    /// Split, augment and train; writes checkpoint.bin and history.tsv.
    Train {
        /// Grid of training configurations to search instead of `[train]`.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Score a dataset with the configured checkpoint.
    Predict {
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a scored file into a ranked run file.
    Rank {
        scored: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Score a run file against qrels.
    Evaluate {
        run: PathBuf,
        qrels: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Truncate AP at this rank.
        #[arg(long)]
        cutoff: Option<usize>,
        /// Normalize truncated AP by min(R, cutoff).
        #[arg(long)]
        min_normalization: bool,
    },
    /// The full chain: augment, train, predict, rank, evaluate.
    Pipeline,
    /// Write the synthetic corpus, vocabulary, translation table and example configs.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        /// Corpus size; defaults to the bundled 200-tweet corpus.
        #[arg(long, requires = "positives")]
        tweets: Option<usize>,
        #[arg(long, requires = "tweets")]
        positives: Option<usize>,
        /// Omit the label column.
        #[arg(long)]
        unlabeled: bool,
    },
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    dataset: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, default_value = "wordpiece")]
    scheme: Scheme,
    /// Start from the Arabic cleaning policy (no lowercasing).
    #[arg(long)]
    arabic: bool,
    #[arg(long)]
    keep_case: bool,
    #[arg(long)]
    keep_urls: bool,
    #[arg(long)]
    keep_mentions: bool,
    #[arg(long)]
    no_split_punctuation: bool,
    #[arg(long)]
    strip_diacritics: bool,
    /// Number of missing tokens to list.
    #[arg(long, default_value_t = 20)]
    sample: usize,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    /// back_translate, pivot_only or both (overrides the config).
    #[arg(long)]
    strategy: Option<StrategyKind>,
    /// Mock translation table (overrides the config's provider).
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    pivot: Option<String>,
    #[arg(long)]
    cache: Option<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("this command needs --config".into()))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_output(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| PipelineError::Output {
            path: parent.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| PipelineError::Output {
        path: path.display().to_string(),
        source,
    })
}

fn cmd_stats(path: &Path, out: &mut impl Write) -> Result<()> {
    let dataset = load_dataset(path, &Schema::default())?;
    let lengths: Vec<usize> = dataset
        .tweets
        .iter()
        .map(|t| t.text.split_whitespace().count())
        .collect();
    let topics: std::collections::BTreeSet<&str> =
        dataset.tweets.iter().map(|t| t.topic_id.as_str()).collect();
    let mean = lengths.iter().sum::<usize>() as f64 / lengths.len().max(1) as f64;
    let w = |e| PipelineError::Output { path: "stdout".into(), source: e };
    writeln!(out, "tweets\t{}", dataset.len()).map_err(w)?;
    writeln!(out, "topics\t{}", topics.len()).map_err(w)?;
    writeln!(
        out,
        "words_per_tweet\tmin {} mean {:.2} max {}",
        lengths.iter().min().unwrap_or(&0),
        mean,
        lengths.iter().max().unwrap_or(&0)
    )
    .map_err(w)?;
    if dataset.is_labeled() {
        writeln!(out, "balance\t{}", class_balance(&dataset)?).map_err(w)?;
    } else {
        log::info!("{} has no labels; class balance omitted", path.display());
    }
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs, out: &mut impl Write) -> Result<()> {
    let dataset = load_dataset(&args.dataset, &Schema::default())?;
    let vocab = load_vocab(&args.vocab, args.scheme)?;
    let mut n = if args.arabic { Normalizer::arabic() } else { Normalizer::english() };
    n.lowercase &= !args.keep_case;
    n.strip_urls &= !args.keep_urls;
    n.strip_mentions &= !args.keep_mentions;
    n.split_punctuation &= !args.no_split_punctuation;
    n.strip_diacritics |= args.strip_diacritics;
    let report = vocab_overlap(&dataset, &vocab, &n, args.sample);
    let w = |e| PipelineError::Output { path: "stdout".into(), source: e };
    writeln!(out, "unique_tokens\t{}", report.corpus_unique_tokens).map_err(w)?;
    writeln!(out, "in_vocabulary\t{}", report.overlapping).map_err(w)?;
    writeln!(out, "fraction\t{:.4}", report.fraction).map_err(w)?;
    for (tok, count) in &report.sample_missing {
        writeln!(out, "missing\t{tok}\t{count}").map_err(w)?;
    }
    Ok(())
}

fn cmd_augment(cli: &Cli, args: &AugmentArgs, out: &mut impl Write) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(_) => load_config(cli)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = args.strategy {
        cfg.augment.strategy = s;
    }
    if let Some(s) = &args.source {
        cfg.augment.source_lang = s.clone();
    }
    if let Some(p) = &args.pivot {
        cfg.augment.pivot_lang = p.clone();
    }
    if let Some(c) = &args.cache {
        cfg.paths.cache = Some(c.clone());
    }
    let provider = match &args.table {
        Some(table) => {
            let mock = MockProvider::load(table).map_err(AugmentError::from)?;
            match &cfg.paths.cache {
                Some(c) => Box::new(CachingProvider::with_file(mock, c).map_err(AugmentError::from)?)
                    as Box<dyn crate::augment::TranslationProvider>,
                None => Box::new(CachingProvider::in_memory(mock)),
            }
        }
        None => pipeline::build_provider(&cfg)?,
    };
    let dataset = pipeline::load_labeled(&args.dataset)?;
    let (augmented, report) = upsample_positive(
        &dataset,
        &cfg.augment.strategy(),
        provider.as_ref(),
        &cfg.augment.options(),
    )?;
    if report.all_failed() {
        return Err(PipelineError::ProviderFailure(report.attempted));
    }
    save_dataset(&augmented, &args.out)?;
    match &args.report {
        Some(path) => write_output(path, report.render())?,
        None => write!(out, "{}", report.render())
            .map_err(|e| PipelineError::Output { path: "stdout".into(), source: e })?,
    }
    Ok(())
}

fn cmd_evaluate(
    run: &Path,
    qrels: &Path,
    dest: Option<&Path>,
    options: ApOptions,
    out: &mut impl Write,
) -> Result<()> {
    let run = load_run(run)?;
    let qrels = load_qrels(qrels)?;
    let report = evaluate_run(&run, &qrels, options)?;
    match dest {
        Some(path) => write_output(path, report.render()),
        None => write!(out, "{}", report.render())
            .map_err(|e| PipelineError::Output { path: "stdout".into(), source: e }),
    }
}

fn cmd_synth(
    dir: &Path,
    sizes: Option<(usize, usize)>,
    unlabeled: bool,
    seed: Option<u64>,
) -> Result<()> {
    let mut dataset = match sizes {
        Some((total, positive)) => {
            if positive > total {
                return Err(ConfigError::Invalid("--positives exceeds --tweets".into()).into());
            }
            synthetic::balance_fixture(total, positive, seed.unwrap_or(1))
        }
        None => match seed {
            Some(seed) => synthetic::generate(&synthetic::CorpusSpec { seed, ..Default::default() }),
            None => synthetic::bundled_corpus(),
        },
    };
    if unlabeled {
        dataset.tweets.iter_mut().for_each(|t| t.label = None);
    }
    let io = |source| PipelineError::Output { path: dir.display().to_string(), source };
    std::fs::create_dir_all(dir).map_err(io)?;
    save_dataset(&dataset, dir.join("corpus.tsv"))?;
    write_vocab(&synthetic::vocabulary(), dir.join("vocab.txt")).map_err(io)?;
    write_output(&dir.join("translations.tsv"), synthetic::translation_table())?;
    write_output(&dir.join("pipeline.toml"), EXAMPLE_CONFIG)?;
    write_output(&dir.join("grid.toml"), EXAMPLE_GRID)?;
    Ok(())
}

fn run(cli: &Cli, out: &mut impl Write) -> Result<()> {
    let w = |e| PipelineError::Output { path: "stdout".into(), source: e };
    match &cli.command {
        Command::Stats { dataset } => cmd_stats(dataset, out),
        Command::AnalyzeVocab(args) => cmd_analyze(args, out),
        Command::Augment(args) => cmd_augment(cli, args, out),
        Command::Train { grid } => {
            let cfg = load_config(cli)?;
            let grid = grid.as_ref().map(load_grid).transpose()?;
            let outcome = pipeline::train(&cfg, grid.as_deref())?;
            if let Some(last) = outcome.history.last() {
                writeln!(
                    out,
                    "trained {} epochs: val_loss {:.4} val_acc {:.4} pos_F1 {:.4}",
                    last.epoch, last.val_loss, last.val_acc, last.positive.f1
                )
                .map_err(w)?;
            }
            writeln!(out, "checkpoint\t{}", cfg.checkpoint_path().display()).map_err(w)
        }
        Command::Predict { dataset, out: dest } => {
            let cfg = load_config(cli)?;
            let data = load_dataset(dataset, &Schema::default())?;
            let scored = pipeline::predict(&cfg, &data)?;
            let mut buf = Vec::new();
            write_scored(&scored, &mut buf).map_err(w)?;
            write_output(dest, buf)
        }
        Command::Rank { scored, out: dest, run_id } => {
            let run_id = match (run_id, &cli.config) {
                (Some(id), _) => id.clone(),
                (None, Some(_)) => load_config(cli)?.run_id,
                (None, None) => "run".to_string(),
            };
            if run_id.is_empty() || run_id.chars().any(char::is_whitespace) {
                return Err(ConfigError::Invalid(format!("invalid run id `{run_id}`")).into());
            }
            let scored = load_scored(scored)?;
            let run = rank_topics(&scored, &run_id)?;
            let mut buf = Vec::new();
            write_run(&run, &mut buf).map_err(w)?;
            write_output(dest, buf)
        }
        Command::Evaluate {
            run,
            qrels,
            out: dest,
            cutoff,
            min_normalization,
        } => {
            let options = ApOptions {
                cutoff: *cutoff,
                normalization: if *min_normalization {
                    ApNormalization::MinRelevantCutoff
                } else {
                    ApNormalization::TotalRelevant
                },
            };
            cmd_evaluate(run, qrels, dest.as_deref(), options, out)
        }
        Command::Pipeline => {
            let cfg = load_config(cli)?;
            let summary = pipeline::run_pipeline(&cfg)?;
            writeln!(out, "mAP\t{:.4}", summary.report.map()).map_err(w)?;
            writeln!(out, "random_baseline_mAP\t{:.4}", summary.baseline.map()).map_err(w)?;
            writeln!(out, "outputs\t{}", summary.output_dir.display()).map_err(w)
        }
        Command::Synth {
            out_dir,
            tweets,
            positives,
            unlabeled,
        } => cmd_synth(out_dir, tweets.zip(*positives), *unlabeled, cli.seed),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(&cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            exit_code(&e)
        }
    }
}
