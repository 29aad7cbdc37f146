//! On-disk translation cache.
//!
//! Records are appended as `sha256(text)<TAB>source<TAB>target<TAB>translation`
//! with backslash, tab, newline and carriage return escaped in the
//! translation. Lookups take a shared lock; misses serialize per key, so a
//! text is sent to the provider at most once even under concurrency.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use sha2::{Digest, Sha256};

use super::provider::{ProviderCounters, ProviderError, TranslationProvider};

type Key = (String, String, String);

pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next()? {
            '\\' => out.push('\\'),
            't' => out.push('\t'),
            'n' => out.push('\n'),
            'r' => out.push('\r'),
            _ => return None,
        }
    }
    Some(out)
}

/// Wraps a provider with an in-memory map, optionally backed by a cache file.
pub struct CachingProvider<P> {
    inner: P,
    entries: RwLock<HashMap<Key, String>>,
    in_flight: Mutex<HashMap<Key, Arc<Mutex<()>>>>,
    file: Option<Mutex<File>>,
    provider_calls: AtomicUsize,
    cache_hits: AtomicUsize,
}

impl<P: TranslationProvider> CachingProvider<P> {
    pub fn in_memory(inner: P) -> Self {
        CachingProvider {
            inner,
            entries: RwLock::new(HashMap::new()),
            in_flight: Mutex::new(HashMap::new()),
            file: None,
            provider_calls: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
        }
    }

    /// Loads existing records from `path` (if present) and appends new ones to it.
    pub fn with_file(inner: P, path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let err = |e: std::io::Error| ProviderError::Cache(format!("{}: {e}", path.display()));
        let mut entries = HashMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(err)?;
            for (n, line) in text.lines().enumerate() {
                if line.is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.splitn(4, '\t').collect();
                let translated = (fields.len() == 4).then(|| unescape(fields[3])).flatten();
                let Some(translated) = translated else {
                    return Err(ProviderError::Cache(format!(
                        "{}: malformed record on line {}",
                        path.display(),
                        n + 1
                    )));
                };
                entries.insert(
                    (fields[0].to_string(), fields[1].to_string(), fields[2].to_string()),
                    translated,
                );
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(err)?;
        Ok(CachingProvider {
            inner,
            entries: RwLock::new(entries),
            in_flight: Mutex::new(HashMap::new()),
            file: Some(Mutex::new(file)),
            provider_calls: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    fn lookup(&self, key: &Key) -> Option<String> {
        self.entries.read().unwrap().get(key).cloned()
    }
}

impl<P: TranslationProvider> TranslationProvider for CachingProvider<P> {
    fn supports(&self, source: &str, target: &str) -> bool {
        self.inner.supports(source, target)
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, ProviderError> {
        let key = (text_hash(text), source.to_string(), target.to_string());
        if let Some(hit) = self.lookup(&key) {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit);
        }
        let gate = self
            .in_flight
            .lock()
            .unwrap()
            .entry(key.clone())
            .or_default()
            .clone();
        let _guard = gate.lock().unwrap();
        if let Some(hit) = self.lookup(&key) {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit);
        }
        self.provider_calls.fetch_add(1, Ordering::Relaxed);
        let translated = self.inner.translate(text, source, target)?;
        if let Some(file) = &self.file {
            let line = format!("{}\t{}\t{}\t{}\n", key.0, key.1, key.2, escape(&translated));
            file.lock()
                .unwrap()
                .write_all(line.as_bytes())
                .map_err(|e| ProviderError::Cache(e.to_string()))?;
        }
        self.entries.write().unwrap().insert(key, translated.clone());
        Ok(translated)
    }

    fn counters(&self) -> Option<ProviderCounters> {
        Some(ProviderCounters {
            provider_calls: self.provider_calls.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::provider::MockProvider;
    use proptest::prelude::*;

    #[test]
    fn repeat_is_a_cache_hit() {
        let p = CachingProvider::in_memory(MockProvider::parse("ar\ten\tx\tX\n").unwrap());
        assert_eq!(p.translate("x", "ar", "en").unwrap(), "X");
        assert_eq!(p.translate("x", "ar", "en").unwrap(), "X");
        let c = p.counters().unwrap();
        assert_eq!((c.provider_calls, c.cache_hits), (1, 1));
    }

    #[test]
    fn file_cache_survives_reload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.tsv");
        let table = "ar\ten\tx\tX\\y\n";
        {
            let p = CachingProvider::with_file(MockProvider::parse(table).unwrap(), &path).unwrap();
            assert_eq!(p.translate("x x", "ar", "en").unwrap(), "X\\y X\\y");
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with(&text_hash("x x")));
        let p = CachingProvider::with_file(MockProvider::default(), &path).unwrap();
        assert_eq!(p.translate("x x", "ar", "en").unwrap(), "X\\y X\\y");
        assert_eq!(p.counters().unwrap().provider_calls, 0);
    }

    #[test]
    fn malformed_cache_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.tsv");
        std::fs::write(&path, "abc\tar\n").unwrap();
        assert!(CachingProvider::with_file(IdentityLike, &path).is_err());
    }

    struct IdentityLike;
    impl TranslationProvider for IdentityLike {
        fn supports(&self, _: &str, _: &str) -> bool {
            true
        }
        fn translate(&self, text: &str, _: &str, _: &str) -> Result<String, ProviderError> {
            Ok(text.into())
        }
    }

    #[test]
    fn concurrent_misses_call_once() {
        let p = CachingProvider::in_memory(IdentityLike);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| p.translate("same", "ar", "en").unwrap());
            }
        });
        let c = p.counters().unwrap();
        assert_eq!((c.provider_calls, c.cache_hits), (1, 7));
    }

    proptest! {
        #[test]
        fn escape_round_trip(s in "[a-z\\\\\t\n\r ]{0,20}") {
            let e = escape(&s);
            prop_assert!(!e.contains('\t') && !e.contains('\n'));
            prop_assert_eq!(unescape(&e), Some(s));
        }
    }
}
