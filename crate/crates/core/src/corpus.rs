//! Labeled tweet collections: loading, validation, splitting and class balance.
//!
//! Datasets are UTF-8 TSV files with a header row. Columns are addressed by
//! name through a [`Schema`], so extra columns are ignored and column order is
//! free. Tabs and newlines inside fields are not representable and are rejected.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("input is empty (no header row)")]
    EmptyInput,
    #[error("schema error: column `{0}` not found in header")]
    MissingColumn(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate tweet ids: {}", .0.join(", "))]
    DuplicateIds(Vec<String>),
    #[error("line {line}: label `{value}` is not 0 or 1")]
    BadLabel { line: usize, value: String },
    #[error("line {line}: missing label in a labeled dataset")]
    MissingLabel { line: usize },
    #[error("line {line}: tweet text is empty")]
    EmptyText { line: usize },
    #[error("line {line}: unknown origin `{value}`")]
    BadOrigin { line: usize, value: String },
    #[error("tweet {0}: text contains a tab or newline and cannot be written as TSV")]
    Unrepresentable(String),
    #[error("invalid split spec: {0}")]
    Spec(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Original,
    Augmented,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Original => "original",
            Origin::Augmented => "augmented",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tweet {
    pub topic_id: String,
    pub tweet_id: String,
    pub text: String,
    /// `Some(true)` marks a check-worthy tweet.
    pub label: Option<bool>,
    pub origin: Origin,
    /// Language tag; set on augmented tweets so tokenizer choice can branch on it.
    pub lang: Option<String>,
    /// For augmented tweets, the id of the original they were derived from.
    pub source_id: Option<String>,
}

impl Tweet {
    pub fn new(topic_id: &str, tweet_id: &str, text: &str, label: Option<bool>) -> Self {
        Tweet {
            topic_id: topic_id.to_string(),
            tweet_id: tweet_id.to_string(),
            text: text.to_string(),
            label,
            origin: Origin::Original,
            lang: None,
            source_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    pub name: String,
    pub tweets: Vec<Tweet>,
}

impl Dataset {
    /// Builds a dataset after checking id uniqueness, non-empty text and
    /// all-or-none labeling.
    pub fn new(name: impl Into<String>, tweets: Vec<Tweet>) -> Result<Self> {
        let ds = Dataset {
            name: name.into(),
            tweets,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    /// True when every tweet carries a label. Empty datasets count as labeled.
    pub fn is_labeled(&self) -> bool {
        self.tweets.iter().all(|t| t.label.is_some())
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let mut dups = BTreeSet::new();
        for t in &self.tweets {
            if !seen.insert(t.tweet_id.as_str()) {
                dups.insert(t.tweet_id.clone());
            }
        }
        if !dups.is_empty() {
            return Err(CorpusError::DuplicateIds(dups.into_iter().collect()));
        }
        for (i, t) in self.tweets.iter().enumerate() {
            if t.text.trim().is_empty() {
                return Err(CorpusError::EmptyText { line: i + 2 });
            }
        }
        let labeled = self.tweets.iter().filter(|t| t.label.is_some()).count();
        if labeled != 0 && labeled != self.tweets.len() {
            let line = self.tweets.iter().position(|t| t.label.is_none()).unwrap() + 2;
            return Err(CorpusError::MissingLabel { line });
        }
        Ok(())
    }

    pub fn positives(&self) -> impl Iterator<Item = &Tweet> {
        self.tweets.iter().filter(|t| t.label == Some(true))
    }
}

/// Maps logical fields onto header names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub topic_id: String,
    pub tweet_id: String,
    pub text: String,
    /// Label column. When the column is absent from the file the dataset is
    /// loaded unlabeled, unless `require_label` is set.
    pub label: Option<String>,
    pub require_label: bool,
    pub origin: String,
    pub lang: String,
    pub source_id: String,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            topic_id: "topic_id".into(),
            tweet_id: "tweet_id".into(),
            text: "tweet_text".into(),
            label: Some("check_worthiness".into()),
            require_label: false,
            origin: "origin".into(),
            lang: "lang".into(),
            source_id: "source_id".into(),
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_dataset(file, &name, schema).map_err(|e| match e {
        CorpusError::Io { source, .. } => CorpusError::Io {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

pub fn read_dataset(reader: impl Read, name: &str, schema: &Schema) -> Result<Dataset> {
    let io_err = |source| CorpusError::Io {
        path: name.to_string(),
        source,
    };
    let mut lines = BufReader::new(reader).lines();
    let header = match lines.next() {
        Some(h) => h.map_err(io_err)?,
        None => return Err(CorpusError::EmptyInput),
    };
    let header = header.strip_prefix('\u{feff}').unwrap_or(&header);
    let columns: HashMap<&str, usize> = header
        .trim_end_matches('\r')
        .split('\t')
        .enumerate()
        .map(|(i, c)| (c, i))
        .collect();
    let required = |col: &str| {
        columns
            .get(col)
            .copied()
            .ok_or_else(|| CorpusError::MissingColumn(col.to_string()))
    };
    let topic_col = required(&schema.topic_id)?;
    let id_col = required(&schema.tweet_id)?;
    let text_col = required(&schema.text)?;
    let label_col = match &schema.label {
        Some(col) => match columns.get(col.as_str()) {
            Some(&i) => Some(i),
            None if schema.require_label => return Err(CorpusError::MissingColumn(col.clone())),
            None => None,
        },
        None => None,
    };
    let origin_col = columns.get(schema.origin.as_str()).copied();
    let lang_col = columns.get(schema.lang.as_str()).copied();
    let source_col = columns.get(schema.source_id.as_str()).copied();
    let width = columns.len();

    let mut tweets = Vec::new();
    let mut labeled_rows = 0usize;
    let mut first_unlabeled = None;
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line.map_err(io_err)?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != width {
            return Err(CorpusError::FieldCount {
                line: line_no,
                expected: width,
                found: fields.len(),
            });
        }
        let text = fields[text_col];
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyText { line: line_no });
        }
        let label = match label_col.map(|c| fields[c].trim()) {
            None | Some("") => {
                first_unlabeled.get_or_insert(line_no);
                None
            }
            Some("1") => Some(true),
            Some("0") => Some(false),
            Some(other) => {
                return Err(CorpusError::BadLabel {
                    line: line_no,
                    value: other.to_string(),
                })
            }
        };
        if label.is_some() {
            labeled_rows += 1;
        }
        let origin = match origin_col.map(|c| fields[c].trim()) {
            None | Some("") | Some("original") => Origin::Original,
            Some("augmented") => Origin::Augmented,
            Some(other) => {
                return Err(CorpusError::BadOrigin {
                    line: line_no,
                    value: other.to_string(),
                })
            }
        };
        let optional = |col: Option<usize>| {
            col.map(|c| fields[c].trim())
                .filter(|s| !s.is_empty())
                .map(str::to_string)
        };
        tweets.push(Tweet {
            topic_id: fields[topic_col].to_string(),
            tweet_id: fields[id_col].to_string(),
            text: text.to_string(),
            label,
            origin,
            lang: optional(lang_col),
            source_id: optional(source_col),
        });
    }
    if labeled_rows > 0 {
        if let Some(line) = first_unlabeled {
            return Err(CorpusError::MissingLabel { line });
        }
    }
    Dataset::new(name, tweets)
}

/// Writes the standard four columns, plus `origin`, `lang` and `source_id`
/// when any tweet carries augmentation metadata.
pub fn write_dataset(dataset: &Dataset, mut out: impl Write) -> std::io::Result<()> {
    for t in &dataset.tweets {
        if t.text.contains(['\t', '\n', '\r']) {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                CorpusError::Unrepresentable(t.tweet_id.clone()),
            ));
        }
    }
    let labeled = !dataset.tweets.is_empty() && dataset.is_labeled();
    let extended = dataset
        .tweets
        .iter()
        .any(|t| t.origin == Origin::Augmented || t.lang.is_some() || t.source_id.is_some());
    let mut header = vec!["topic_id", "tweet_id", "tweet_text"];
    if labeled {
        header.push("check_worthiness");
    }
    if extended {
        header.extend(["origin", "lang", "source_id"]);
    }
    writeln!(out, "{}", header.join("\t"))?;
    for t in &dataset.tweets {
        write!(out, "{}\t{}\t{}", t.topic_id, t.tweet_id, t.text)?;
        if labeled {
            write!(out, "\t{}", u8::from(t.label == Some(true)))?;
        }
        if extended {
            write!(
                out,
                "\t{}\t{}\t{}",
                t.origin.as_str(),
                t.lang.as_deref().unwrap_or(""),
                t.source_id.as_deref().unwrap_or("")
            )?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut buf = Vec::new();
    write_dataset(dataset, &mut buf).map_err(io)?;
    std::fs::write(path, buf).map_err(io)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub fractions: Vec<(String, f64)>,
    pub seed: u64,
    pub stratified: bool,
}

impl SplitSpec {
    pub fn new(fractions: &[(&str, f64)], seed: u64, stratified: bool) -> Self {
        SplitSpec {
            fractions: fractions.iter().map(|(n, f)| (n.to_string(), *f)).collect(),
            seed,
            stratified,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fractions.is_empty() {
            return Err(CorpusError::Spec("no splits given".into()));
        }
        let mut names = HashSet::new();
        for (name, f) in &self.fractions {
            if !(*f > 0.0 && *f <= 1.0) {
                return Err(CorpusError::Spec(format!(
                    "fraction for `{name}` must be in (0, 1], got {f}"
                )));
            }
            if !names.insert(name.as_str()) {
                return Err(CorpusError::Spec(format!("split name `{name}` repeated")));
            }
        }
        let sum: f64 = self.fractions.iter().map(|(_, f)| f).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::Spec(format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// `round(fraction * total)` for every split but the last, which takes the rest.
fn split_sizes(fractions: &[f64], total: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(fractions.len());
    let mut assigned = 0usize;
    for (i, f) in fractions.iter().enumerate() {
        if i + 1 == fractions.len() {
            sizes.push(total - assigned);
        } else {
            let want = (f * total as f64).round() as usize;
            let take = want.min(total - assigned);
            assigned += take;
            sizes.push(take);
        }
    }
    sizes
}

/// Largest-remainder apportionment of `count` items proportionally to `sizes`.
fn apportion(count: usize, sizes: &[usize], total: usize) -> Vec<usize> {
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let quotas: Vec<f64> = sizes
        .iter()
        .map(|&s| s as f64 * count as f64 / total as f64)
        .collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut left = count - alloc.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if alloc[i] < sizes[i] {
            alloc[i] += 1;
            left -= 1;
        }
    }
    alloc
}

/// Partitions `dataset` by `spec`. Within each split tweets keep their input order.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<Vec<(String, Dataset)>> {
    spec.validate()?;
    if spec.stratified && !dataset.is_labeled() {
        return Err(CorpusError::Contract(
            "stratified split requires a fully labeled dataset".into(),
        ));
    }
    let total = dataset.len();
    let fractions: Vec<f64> = spec.fractions.iter().map(|(_, f)| *f).collect();
    let sizes = split_sizes(&fractions, total);
    let mut rng = rng::seeded(spec.seed);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); sizes.len()];
    if spec.stratified {
        let (mut pos, mut neg): (Vec<usize>, Vec<usize>) =
            (0..total).partition(|&i| dataset.tweets[i].label == Some(true));
        rng::shuffle(&mut pos, &mut rng);
        rng::shuffle(&mut neg, &mut rng);
        let pos_alloc = apportion(pos.len(), &sizes, total);
        let (mut p, mut n) = (pos.into_iter(), neg.into_iter());
        for (i, (&size, &np)) in sizes.iter().zip(&pos_alloc).enumerate() {
            members[i].extend(p.by_ref().take(np));
            members[i].extend(n.by_ref().take(size - np));
        }
    } else {
        let mut order: Vec<usize> = (0..total).collect();
        rng::shuffle(&mut order, &mut rng);
        let mut it = order.into_iter();
        for (i, &size) in sizes.iter().enumerate() {
            members[i].extend(it.by_ref().take(size));
        }
    }

    Ok(spec
        .fractions
        .iter()
        .zip(members)
        .map(|((name, _), mut idx)| {
            idx.sort_unstable();
            let tweets = idx.into_iter().map(|i| dataset.tweets[i].clone()).collect();
            (
                name.clone(),
                Dataset {
                    name: format!("{}/{}", dataset.name, name),
                    tweets,
                },
            )
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassBalance {
    pub total: usize,
    pub positive: usize,
    pub positive_fraction: f64,
}

impl ClassBalance {
    pub fn from_counts(total: usize, positive: usize) -> Self {
        let positive_fraction = if total == 0 {
            0.0
        } else {
            positive as f64 / total as f64
        };
        ClassBalance {
            total,
            positive,
            positive_fraction,
        }
    }

    /// Whole-number percentage, as printed next to the exact fraction.
    pub fn percent(&self) -> u32 {
        (self.positive_fraction * 100.0).round() as u32
    }
}

impl fmt::Display for ClassBalance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "total {}, positive {}, fraction {:.4} ({}%)",
            self.total,
            self.positive,
            self.positive_fraction,
            self.percent()
        )
    }
}

pub fn class_balance(dataset: &Dataset) -> Result<ClassBalance> {
    if !dataset.is_labeled() {
        return Err(CorpusError::Contract(
            "class balance requires a fully labeled dataset".into(),
        ));
    }
    Ok(ClassBalance::from_counts(
        dataset.len(),
        dataset.positives().count(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const THREE_ROWS: &str = "topic_id\ttweet_id\ttweet_text\tcheck_worthiness\n\
        t1\t1\tfirst tweet\t1\n\
        t1\t2\tsecond tweet\t0\n\
        t2\t3\tthird tweet\t1\n";

    fn parse(s: &str) -> Result<Dataset> {
        read_dataset(s.as_bytes(), "test", &Schema::default())
    }

    fn synthetic(total: usize, positive: usize) -> Dataset {
        let tweets = (0..total)
            .map(|i| Tweet::new("t", &format!("id{i:05}"), &format!("text {i}"), Some(i < positive)))
            .collect();
        Dataset::new("synthetic", tweets).unwrap()
    }

    #[test]
    fn loads_three_rows() {
        let ds = parse(THREE_ROWS).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.positives().count(), 2);
        assert_eq!(ds.tweets[1].text, "second tweet");
    }

    #[test]
    fn missing_text_column_is_schema_error() {
        let err = parse("topic_id\ttweet_id\tcheck_worthiness\nt\t1\t0\n").unwrap_err();
        assert!(matches!(err, CorpusError::MissingColumn(c) if c == "tweet_text"));
    }

    #[test]
    fn duplicate_ids_listed() {
        let err = parse("topic_id\ttweet_id\ttweet_text\nt\ta\tx\nt\ta\ty\nt\tb\tz\n").unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateIds(ids) if ids == vec!["a".to_string()]));
    }

    #[test]
    fn bad_label_reports_line() {
        let err = parse("topic_id\ttweet_id\ttweet_text\tcheck_worthiness\nt\ta\tx\t1\nt\tb\ty\t2\n")
            .unwrap_err();
        assert!(matches!(err, CorpusError::BadLabel { line: 3, .. }));
    }

    #[test]
    fn empty_text_reports_line() {
        let err = parse("topic_id\ttweet_id\ttweet_text\nt\ta\t   \n").unwrap_err();
        assert!(matches!(err, CorpusError::EmptyText { line: 2 }));
    }

    #[test]
    fn partial_labels_are_rejected() {
        let err = parse("topic_id\ttweet_id\ttweet_text\tcheck_worthiness\nt\ta\tx\t1\nt\tb\ty\t\n")
            .unwrap_err();
        assert!(matches!(err, CorpusError::MissingLabel { line: 3 }));
    }

    #[test]
    fn unlabeled_file_loads() {
        let ds = parse("topic_id\ttweet_id\ttweet_text\nt\ta\tx\n").unwrap();
        assert!(ds.tweets[0].label.is_none());
        assert!(class_balance(&ds).is_err());
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse(""), Err(CorpusError::EmptyInput)));
    }

    #[test]
    fn arabic_scale_balance() {
        let b = class_balance(&synthetic(1500, 458)).unwrap();
        assert_eq!((b.total, b.positive), (1500, 458));
        assert_eq!(format!("{:.4}", b.positive_fraction), "0.3053");
        assert_eq!(b.percent(), 31);
    }

    #[test]
    fn english_scale_balance() {
        // round(0.34 * 672) = 228
        assert_eq!((0.34f64 * 672.0).round() as usize, 228);
        let b = class_balance(&synthetic(672, 228)).unwrap();
        assert_eq!(format!("{:.4}", b.positive_fraction), "0.3393");
        assert_eq!(b.percent(), 34);
        assert_eq!(class_balance(&synthetic(10, 0)).unwrap().positive_fraction, 0.0);
    }

    #[test]
    fn split_sizes_match_fractions() {
        let ds = synthetic(10, 4);
        let parts = split(&ds, &SplitSpec::new(&[("train", 0.8), ("val", 0.2)], 7, false)).unwrap();
        assert_eq!(parts[0].1.len(), 8);
        assert_eq!(parts[1].1.len(), 2);

        let ds = synthetic(1500, 458);
        let spec = SplitSpec::new(&[("train", 0.7), ("val", 0.2), ("holdout", 0.1)], 1, true);
        let sizes: Vec<usize> = split(&ds, &spec).unwrap().iter().map(|(_, d)| d.len()).collect();
        assert_eq!(sizes, vec![1050, 300, 150]);
    }

    #[test]
    fn single_split_is_identity() {
        let ds = synthetic(13, 5);
        let parts = split(&ds, &SplitSpec::new(&[("all", 1.0)], 99, true)).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].1.tweets, ds.tweets);
    }

    #[test]
    fn split_spec_errors() {
        let ds = synthetic(10, 3);
        assert!(matches!(
            split(&ds, &SplitSpec::new(&[("a", 0.0), ("b", 1.0)], 1, false)),
            Err(CorpusError::Spec(_))
        ));
        assert!(matches!(
            split(&ds, &SplitSpec::new(&[("a", 0.5), ("b", 0.4)], 1, false)),
            Err(CorpusError::Spec(_))
        ));
        let unlabeled = Dataset::new("u", vec![Tweet::new("t", "a", "x", None)]).unwrap();
        assert!(matches!(
            split(&unlabeled, &SplitSpec::new(&[("all", 1.0)], 1, true)),
            Err(CorpusError::Contract(_))
        ));
    }

    proptest! {
        #[test]
        fn split_is_a_stratified_partition(
            total in 1usize..300,
            pos_share in 0.0f64..1.0,
            seed in any::<u64>(),
            three in any::<bool>(),
        ) {
            let positive = (total as f64 * pos_share) as usize;
            let ds = synthetic(total, positive);
            let fr: &[(&str, f64)] = if three {
                &[("train", 0.7), ("val", 0.2), ("holdout", 0.1)]
            } else {
                &[("train", 0.8), ("val", 0.2)]
            };
            let spec = SplitSpec::new(fr, seed, true);
            let parts = split(&ds, &spec).unwrap();
            prop_assert_eq!(&parts, &split(&ds, &spec).unwrap());

            let mut ids: Vec<&str> = parts
                .iter()
                .flat_map(|(_, d)| d.tweets.iter().map(|t| t.tweet_id.as_str()))
                .collect();
            prop_assert_eq!(ids.len(), total);
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), total);

            let global = positive as f64 / total as f64;
            for (_, d) in &parts {
                let p = d.positives().count() as f64;
                prop_assert!((p - global * d.len() as f64).abs() <= 1.0 + 1e-9);
            }
        }

        #[test]
        fn write_then_read_is_identity(
            rows in proptest::collection::vec(("[a-z]{1,3}", "[a-zA-Z0-9 ,.!]{0,20}[a-z]", any::<bool>()), 1..20)
        ) {
            let tweets: Vec<Tweet> = rows
                .iter()
                .enumerate()
                .map(|(i, (topic, text, label))| Tweet::new(topic, &format!("{i}"), text, Some(*label)))
                .collect();
            let ds = Dataset::new("rt", tweets).unwrap();
            let mut buf = Vec::new();
            write_dataset(&ds, &mut buf).unwrap();
            let back = read_dataset(&buf[..], "rt", &Schema::default()).unwrap();
            prop_assert_eq!(back.tweets, ds.tweets);
        }
    }
}
