//! Positive-class upsampling by machine translation.
//!
//! Three strategies: back-translation through a pivot language, the pivot
//! translation alone, or both. Augmented tweets are appended after the
//! originals with `origin = augmented`, the positive label, a language tag
//! and the id of the tweet they came from. [`guard_splits`] rejects split
//! layouts in which augmented data or its sources cross split boundaries.

mod cache;
mod provider;

use std::collections::HashSet;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{text_hash, CachingProvider};
pub use provider::{
    HttpProvider, HttpProviderConfig, IdentityProvider, MockProvider, ProviderCounters,
    ProviderError, TranslationProvider,
};

use crate::corpus::{class_balance, ClassBalance, CorpusError, Dataset, Origin, Tweet};

pub const BACK_TRANSLATION_SUFFIX: &str = "#bt";
pub const PIVOT_SUFFIX: &str = "#pv";

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid strategy: {0}")]
    Strategy(String),
    #[error("label leakage across splits; offending tweet ids: {}", .0.join(", "))]
    Leakage(Vec<String>),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

pub type Result<T> = std::result::Result<T, AugmentError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// source → pivot → source
    BackTranslate,
    /// source → pivot
    PivotOnly,
    Both,
}

impl FromStr for StrategyKind {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "back_translate" | "backtranslate" => Ok(StrategyKind::BackTranslate),
            "pivot_only" | "pivotonly" => Ok(StrategyKind::PivotOnly),
            "both" => Ok(StrategyKind::Both),
            other => Err(AugmentError::Strategy(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentStrategy {
    pub kind: StrategyKind,
    pub source_lang: String,
    pub pivot_lang: String,
}

impl Default for AugmentStrategy {
    fn default() -> Self {
        AugmentStrategy {
            kind: StrategyKind::BackTranslate,
            source_lang: "ar".into(),
            pivot_lang: "en".into(),
        }
    }
}

impl AugmentStrategy {
    pub fn new(kind: StrategyKind, source_lang: &str, pivot_lang: &str) -> Self {
        AugmentStrategy {
            kind,
            source_lang: source_lang.into(),
            pivot_lang: pivot_lang.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_lang.is_empty() || self.pivot_lang.is_empty() {
            return Err(AugmentError::Strategy("language codes must be non-empty".into()));
        }
        if self.source_lang == self.pivot_lang {
            return Err(AugmentError::Strategy(format!(
                "pivot language must differ from the source language ({})",
                self.source_lang
            )));
        }
        Ok(())
    }

    /// New tweets per translated original.
    pub fn multiplier(&self) -> usize {
        match self.kind {
            StrategyKind::Both => 2,
            _ => 1,
        }
    }

    fn needs_back(&self) -> bool {
        self.kind != StrategyKind::PivotOnly
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentOptions {
    /// Extra attempts per provider call after the first failure.
    pub max_retries: usize,
    /// Upper bound on concurrent provider calls.
    pub concurrency: usize,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        AugmentOptions {
            max_retries: 2,
            concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    pub tweet_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentReport {
    pub strategy: StrategyKind,
    /// Positive originals sent for translation.
    pub attempted: usize,
    pub originals_translated: usize,
    pub tweets_added: usize,
    pub skipped: Vec<Skipped>,
    pub before: ClassBalance,
    pub after: ClassBalance,
    pub provider_calls: usize,
    pub cache_hits: usize,
    pub warnings: Vec<String>,
}

impl AugmentReport {
    /// True when there was something to translate and nothing succeeded.
    pub fn all_failed(&self) -> bool {
        self.attempted > 0 && self.originals_translated == 0
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "strategy\t{:?}\nattempted\t{}\noriginals_translated\t{}\ntweets_added\t{}\nskipped\t{}\n\
             before\t{}\nafter\t{}\nprovider_calls\t{}\ncache_hits\t{}\n",
            self.strategy,
            self.attempted,
            self.originals_translated,
            self.tweets_added,
            self.skipped.len(),
            self.before,
            self.after,
            self.provider_calls,
            self.cache_hits
        );
        for s in &self.skipped {
            out.push_str(&format!("skip\t{}\t{}\n", s.tweet_id, s.reason));
        }
        for w in &self.warnings {
            out.push_str(&format!("WARNING\t{w}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackTranslation {
    pub pivot: String,
    pub back: String,
}

/// Translates `text` to `pivot` and back, keeping the intermediate text.
pub fn back_translate(
    text: &str,
    provider: &dyn TranslationProvider,
    source: &str,
    pivot: &str,
) -> std::result::Result<BackTranslation, ProviderError> {
    check_support(provider, source, pivot)?;
    check_support(provider, pivot, source)?;
    let pivot_text = provider.translate(text, source, pivot)?;
    let back = provider.translate(&pivot_text, pivot, source)?;
    Ok(BackTranslation {
        pivot: pivot_text,
        back,
    })
}

fn check_support(
    provider: &dyn TranslationProvider,
    source: &str,
    target: &str,
) -> std::result::Result<(), ProviderError> {
    if provider.supports(source, target) {
        Ok(())
    } else {
        Err(ProviderError::Unsupported {
            source_lang: source.into(),
            target_lang: target.into(),
        })
    }
}

fn with_retries(
    provider: &dyn TranslationProvider,
    text: &str,
    source: &str,
    target: &str,
    max_retries: usize,
    calls: &AtomicUsize,
) -> std::result::Result<String, ProviderError> {
    let mut attempt = 0;
    loop {
        calls.fetch_add(1, Ordering::Relaxed);
        match provider.translate(text, source, target) {
            Ok(t) => return Ok(t),
            Err(e @ ProviderError::Unsupported { .. }) => return Err(e),
            Err(e) if attempt >= max_retries => return Err(e),
            Err(e) => {
                log::debug!("translation attempt {} failed: {e}", attempt + 1);
                attempt += 1;
            }
        }
    }
}

fn augmented(source: &Tweet, text: String, suffix: &str, lang: &str) -> Tweet {
    Tweet {
        topic_id: source.topic_id.clone(),
        tweet_id: format!("{}{suffix}", source.tweet_id),
        text,
        label: Some(true),
        origin: Origin::Augmented,
        lang: Some(lang.to_string()),
        source_id: Some(source.tweet_id.clone()),
    }
}

/// Appends translated copies of every original positive tweet. Provider
/// failures skip the tweet (recorded in the report) instead of failing.
pub fn upsample_positive(
    dataset: &Dataset,
    strategy: &AugmentStrategy,
    provider: &dyn TranslationProvider,
    options: &AugmentOptions,
) -> Result<(Dataset, AugmentReport)> {
    strategy.validate()?;
    if !dataset.is_labeled() {
        return Err(AugmentError::Contract(format!(
            "dataset `{}` must be labeled to upsample",
            dataset.name
        )));
    }
    let before = class_balance(dataset)?;
    let sources: Vec<&Tweet> = dataset
        .tweets
        .iter()
        .filter(|t| t.label == Some(true) && t.origin == Origin::Original)
        .collect();
    let counters_before = provider.counters();
    let calls = AtomicUsize::new(0);
    let (src, piv) = (strategy.source_lang.as_str(), strategy.pivot_lang.as_str());

    let results: Vec<std::result::Result<Vec<Tweet>, ProviderError>> = if sources.is_empty() {
        Vec::new()
    } else {
        check_support(provider, src, piv)?;
        if strategy.needs_back() {
            check_support(provider, piv, src)?;
        }
        let translate_one = |tweet: &&Tweet| {
            let pivot_text = with_retries(provider, &tweet.text, src, piv, options.max_retries, &calls)?;
            let mut out = Vec::with_capacity(2);
            if strategy.needs_back() {
                let back = with_retries(provider, &pivot_text, piv, src, options.max_retries, &calls)?;
                out.push(augmented(tweet, back, BACK_TRANSLATION_SUFFIX, src));
            }
            if strategy.kind != StrategyKind::BackTranslate {
                out.push(augmented(tweet, pivot_text, PIVOT_SUFFIX, piv));
            }
            Ok(out)
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.concurrency.max(1))
            .build()
            .map_err(|e| AugmentError::Contract(format!("thread pool: {e}")))?;
        pool.install(|| sources.par_iter().map(translate_one).collect())
    };

    let mut tweets = dataset.tweets.clone();
    let mut skipped = Vec::new();
    let mut translated = 0;
    for (source, result) in sources.iter().zip(results) {
        match result {
            Ok(new) => {
                translated += 1;
                tweets.extend(new);
            }
            Err(e) => {
                log::warn!("skipping tweet {}: {e}", source.tweet_id);
                skipped.push(Skipped {
                    tweet_id: source.tweet_id.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    let added = tweets.len() - dataset.tweets.len();
    let out = Dataset::new(dataset.name.clone(), tweets)?;
    let after = class_balance(&out)?;
    let (provider_calls, cache_hits) = match (counters_before, provider.counters()) {
        (Some(b), Some(a)) => (a.provider_calls - b.provider_calls, a.cache_hits - b.cache_hits),
        _ => (calls.load(Ordering::Relaxed), 0),
    };
    let report = AugmentReport {
        strategy: strategy.kind,
        attempted: sources.len(),
        originals_translated: translated,
        tweets_added: added,
        skipped,
        before,
        after,
        provider_calls,
        cache_hits,
        warnings: Vec::new(),
    };
    Ok((out, report))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GuardOutcome {
    pub offending_ids: Vec<String>,
    pub warnings: Vec<String>,
}

/// Checks that augmented tweets live only in `augment_target` and that no
/// augmented tweet was derived from a tweet of another split. With
/// `allow_leakage` violations become warnings instead of an error.
pub fn guard_splits(
    splits: &[(String, Dataset)],
    augment_target: &str,
    allow_leakage: bool,
) -> Result<GuardOutcome> {
    if !splits.iter().any(|(name, _)| name == augment_target) {
        return Err(AugmentError::Contract(format!(
            "augment target split `{augment_target}` is not among the splits"
        )));
    }
    let outside: HashSet<&str> = splits
        .iter()
        .filter(|(name, _)| name != augment_target)
        .flat_map(|(_, d)| d.tweets.iter())
        .filter(|t| t.origin == Origin::Original)
        .map(|t| t.tweet_id.as_str())
        .collect();
    let mut offending = Vec::new();
    for (name, d) in splits {
        for t in d.tweets.iter().filter(|t| t.origin == Origin::Augmented) {
            let misplaced = name != augment_target;
            let leaked_source = t.source_id.as_deref().is_some_and(|s| outside.contains(s));
            if misplaced || leaked_source {
                offending.push(t.tweet_id.clone());
            }
        }
    }
    if offending.is_empty() {
        return Ok(GuardOutcome::default());
    }
    if !allow_leakage {
        return Err(AugmentError::Leakage(offending));
    }
    let warning = format!(
        "LABEL LEAKAGE: {} augmented tweets derive from or sit in evaluation splits; \
         validation and hold-out scores are inflated",
        offending.len()
    );
    log::warn!("{warning}");
    Ok(GuardOutcome {
        offending_ids: offending,
        warnings: vec![warning],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    fn data(labels: &[bool]) -> Dataset {
        let tweets = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| Tweet::new("T1", &format!("{i}"), &format!("w{i} x"), Some(l)))
            .collect();
        Dataset::new("d", tweets).unwrap()
    }

    fn table() -> MockProvider {
        MockProvider::parse("ar\ten\tx\tX\nen\tar\tX\tx2\n").unwrap()
    }

    struct Flaky {
        fail_first: usize,
        seen: AtomicUsize,
    }

    impl TranslationProvider for Flaky {
        fn supports(&self, _: &str, _: &str) -> bool {
            true
        }
        fn translate(&self, text: &str, _: &str, _: &str) -> std::result::Result<String, ProviderError> {
            if self.seen.fetch_add(1, Ordering::SeqCst) < self.fail_first {
                Err(ProviderError::Request("boom".into()))
            } else {
                Ok(text.to_uppercase())
            }
        }
    }

    struct AlwaysFails;

    impl TranslationProvider for AlwaysFails {
        fn supports(&self, _: &str, _: &str) -> bool {
            true
        }
        fn translate(&self, _: &str, _: &str, _: &str) -> std::result::Result<String, ProviderError> {
            Err(ProviderError::Request("down".into()))
        }
    }

    #[test]
    fn back_translate_examples() {
        let id = back_translate("some text", &IdentityProvider, "ar", "en").unwrap();
        assert_eq!(id.back, "some text");
        let cached = CachingProvider::in_memory(table());
        let bt = back_translate("x", &cached, "ar", "en").unwrap();
        assert_eq!((bt.pivot.as_str(), bt.back.as_str()), ("X", "x2"));
        assert_eq!(cached.counters().unwrap().provider_calls, 2);
        back_translate("x", &cached, "ar", "en").unwrap();
        let c = cached.counters().unwrap();
        assert_eq!((c.provider_calls, c.cache_hits), (2, 2));
        assert!(back_translate("x", &table(), "ar", "fr").is_err());
    }

    #[test]
    fn strategies_and_records() {
        let d = data(&[true, false, true]);
        let (out, report) = upsample_positive(
            &d,
            &AugmentStrategy::new(StrategyKind::Both, "ar", "en"),
            &table(),
            &AugmentOptions::default(),
        )
        .unwrap();
        assert_eq!(out.tweets[..3], d.tweets[..]);
        let ids: Vec<&str> = out.tweets[3..].iter().map(|t| t.tweet_id.as_str()).collect();
        assert_eq!(ids, ["0#bt", "0#pv", "2#bt", "2#pv"]);
        let bt = &out.tweets[3];
        assert_eq!(bt.text, "w0 x2");
        assert_eq!((bt.origin, bt.label), (Origin::Augmented, Some(true)));
        assert_eq!(bt.lang.as_deref(), Some("ar"));
        assert_eq!(bt.source_id.as_deref(), Some("0"));
        let pv = &out.tweets[4];
        assert_eq!((pv.text.as_str(), pv.lang.as_deref()), ("w0 X", Some("en")));
        assert_eq!(report.tweets_added, report.originals_translated * 2);
        assert_eq!(report.provider_calls, 4);
        assert_eq!((report.after.total, report.after.positive), (7, 6));
    }

    #[test]
    fn zero_positives_and_unlabeled() {
        let d = data(&[false, false]);
        let (out, report) =
            upsample_positive(&d, &AugmentStrategy::default(), &AlwaysFails, &AugmentOptions::default()).unwrap();
        assert_eq!(out, d);
        assert_eq!(report.provider_calls, 0);
        assert!(!report.all_failed());
        let unlabeled = Dataset::new("u", vec![Tweet::new("T", "1", "a", None)]).unwrap();
        let err = upsample_positive(&unlabeled, &AugmentStrategy::default(), &IdentityProvider, &AugmentOptions::default())
            .unwrap_err();
        assert!(matches!(err, AugmentError::Contract(_)));
        let bad = AugmentStrategy::new(StrategyKind::PivotOnly, "en", "en");
        assert!(matches!(bad.validate(), Err(AugmentError::Strategy(_))));
    }

    #[test]
    fn ten_positives_both_adds_twenty() {
        let d = data(&[true; 10]);
        let (out, report) = upsample_positive(
            &d,
            &AugmentStrategy::new(StrategyKind::Both, "ar", "en"),
            &IdentityProvider,
            &AugmentOptions::default(),
        )
        .unwrap();
        assert_eq!(report.tweets_added, 20);
        assert_eq!(out.len(), 30);
    }

    #[test]
    fn retries_then_skips() {
        let d = data(&[true]);
        let opts = AugmentOptions { max_retries: 2, concurrency: 1 };
        let flaky = Flaky { fail_first: 2, seen: AtomicUsize::new(0) };
        let (_, report) = upsample_positive(&d, &AugmentStrategy::default(), &flaky, &opts).unwrap();
        assert_eq!(report.originals_translated, 1);
        assert_eq!(report.provider_calls, 4);

        let d = data(&[true, false, true]);
        let (out, report) = upsample_positive(&d, &AugmentStrategy::default(), &AlwaysFails, &opts).unwrap();
        assert_eq!(out, d);
        assert_eq!(report.skipped.len(), 2);
        assert_eq!(report.skipped[0].tweet_id, "0");
        assert_eq!(report.provider_calls, 6);
        assert!(report.all_failed());
    }

    #[test]
    fn output_is_independent_of_concurrency() {
        let d = data(&[true, true, false, true, true, true, false, true]);
        let strategy = AugmentStrategy::new(StrategyKind::Both, "ar", "en");
        let one = upsample_positive(&d, &strategy, &table(), &AugmentOptions { max_retries: 0, concurrency: 1 }).unwrap();
        let many = upsample_positive(&d, &strategy, &table(), &AugmentOptions { max_retries: 0, concurrency: 8 }).unwrap();
        assert_eq!(one.0, many.0);
    }

    fn split_fixture(leak: bool) -> Vec<(String, Dataset)> {
        let mut train = vec![Tweet::new("T", "1", "a", Some(true))];
        let val = vec![Tweet::new("T", "2", "b", Some(true))];
        let source = if leak { &val[0] } else { &train[0] };
        train.push(augmented(source, "a'".into(), BACK_TRANSLATION_SUFFIX, "ar"));
        vec![
            ("train".into(), Dataset::new("train", train).unwrap()),
            ("val".into(), Dataset::new("val", val).unwrap()),
        ]
    }

    #[test]
    fn guard_cases() {
        assert_eq!(guard_splits(&split_fixture(false), "train", false).unwrap(), GuardOutcome::default());
        match guard_splits(&split_fixture(true), "train", false) {
            Err(AugmentError::Leakage(ids)) => assert_eq!(ids, ["2#bt"]),
            other => panic!("expected leakage error, got {other:?}"),
        }
        let outcome = guard_splits(&split_fixture(true), "train", true).unwrap();
        assert_eq!(outcome.offending_ids, ["2#bt"]);
        assert_eq!(outcome.warnings.len(), 1);

        // An augmented tweet inside the validation split is rejected even
        // when its source is also in validation.
        let val = vec![
            Tweet::new("T", "2", "b", Some(true)),
            augmented(&Tweet::new("T", "2", "b", Some(true)), "b'".into(), PIVOT_SUFFIX, "en"),
        ];
        let misplaced = vec![
            ("train".to_string(), Dataset::new("train", vec![Tweet::new("T", "1", "a", Some(true))]).unwrap()),
            ("val".to_string(), Dataset::new("val", val).unwrap()),
        ];
        let err = guard_splits(&misplaced, "train", false).unwrap_err();
        assert!(err.to_string().contains("2#pv"));
        assert!(guard_splits(&split_fixture(false), "holdout", false).is_err());
    }
}
