//! Ranked-retrieval metrics: P@k, AP/mAP, RR and R-Precision.
//!
//! Rankings are lists of tweet ids, judged against per-topic binary qrels.
//! Ids missing from the qrels count as non-relevant and are tallied as
//! "unjudged" in the report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

use crate::rank::RankedRun;

pub const K_GRID: [usize; 8] = [1, 3, 5, 10, 15, 20, 25, 30];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("topic {0} appears in the run but not in the qrels")]
    UnknownTopic(String),
    #[error("qrels line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("qrels: duplicate judgment for tweet {tweet_id} in topic {topic_id}")]
    Duplicate { topic_id: String, tweet_id: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Judgments for one topic: tweet id → relevant.
pub type TopicJudgments = BTreeMap<String, bool>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelevanceJudgments {
    pub topics: BTreeMap<String, TopicJudgments>,
}

impl RelevanceJudgments {
    pub fn insert(&mut self, topic_id: &str, tweet_id: &str, relevant: bool) -> Result<()> {
        let topic = self.topics.entry(topic_id.to_string()).or_default();
        if topic.insert(tweet_id.to_string(), relevant).is_some() {
            return Err(MetricsError::Duplicate {
                topic_id: topic_id.into(),
                tweet_id: tweet_id.into(),
            });
        }
        Ok(())
    }

    pub fn topic(&self, topic_id: &str) -> Option<&TopicJudgments> {
        self.topics.get(topic_id)
    }

    /// `topic<TAB>tweet<TAB>relevance` lines, one per judgment.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (topic, judged) in &self.topics {
            for (id, &rel) in judged {
                let _ = writeln!(out, "{topic}\t{id}\t{}", u8::from(rel));
            }
        }
        out
    }
}

pub fn read_qrels(reader: impl BufRead) -> Result<RelevanceJudgments> {
    let mut q = RelevanceJudgments::default();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| MetricsError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(MetricsError::Parse {
                line: line_no,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let rel = match fields[2].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(MetricsError::Parse {
                    line: line_no,
                    message: format!("relevance must be 0 or 1, found `{other}`"),
                })
            }
        };
        q.insert(fields[0], fields[1], rel)?;
    }
    Ok(q)
}

pub fn load_qrels(path: impl AsRef<Path>) -> Result<RelevanceJudgments> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_qrels(std::io::BufReader::new(file))
}

fn relevant(id: &str, qrels: &TopicJudgments) -> bool {
    qrels.get(id).copied().unwrap_or(false)
}

fn total_relevant(qrels: &TopicJudgments) -> usize {
    qrels.values().filter(|&&r| r).count()
}

/// Relevant ids among the first `k` positions, divided by `k` even when the
/// ranking is shorter.
pub fn precision_at_k(ranking: &[&str], qrels: &TopicJudgments, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    let hits = ranking.iter().take(k).filter(|id| relevant(id, qrels)).count();
    hits as f64 / k as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ApNormalization {
    /// Divide by the number of relevant tweets in the qrels.
    #[default]
    TotalRelevant,
    /// Divide by `min(R, cutoff)`; without a cutoff this equals `TotalRelevant`.
    MinRelevantCutoff,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ApOptions {
    /// Only ranks `1..=cutoff` contribute.
    pub cutoff: Option<usize>,
    pub normalization: ApNormalization,
}

/// Mean of P@r over the ranks `r` holding a relevant tweet, normalized per
/// `options`. Zero when the topic has no relevant tweets.
pub fn average_precision(ranking: &[&str], qrels: &TopicJudgments, options: ApOptions) -> f64 {
    let r = total_relevant(qrels);
    let depth = options.cutoff.map_or(ranking.len(), |c| c.min(ranking.len()));
    let norm = match (options.normalization, options.cutoff) {
        (ApNormalization::MinRelevantCutoff, Some(c)) => r.min(c),
        _ => r,
    };
    if norm == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, id) in ranking[..depth].iter().enumerate() {
        if relevant(id, qrels) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / norm as f64
}

pub fn reciprocal_rank(ranking: &[&str], qrels: &TopicJudgments) -> f64 {
    ranking
        .iter()
        .position(|id| relevant(id, qrels))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

pub fn r_precision(ranking: &[&str], qrels: &TopicJudgments) -> f64 {
    match total_relevant(qrels) {
        0 => 0.0,
        r => precision_at_k(ranking, qrels, r),
    }
}

/// One report row.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicMetrics {
    pub topic_id: String,
    pub rr: f64,
    pub r_precision: f64,
    /// P@k for each k of [`K_GRID`], in order.
    pub precision: [f64; 8],
    pub ap: f64,
}

impl TopicMetrics {
    pub fn compute(topic_id: &str, ranking: &[&str], qrels: &TopicJudgments, options: ApOptions) -> Self {
        TopicMetrics {
            topic_id: topic_id.to_string(),
            rr: reciprocal_rank(ranking, qrels),
            r_precision: r_precision(ranking, qrels),
            precision: K_GRID.map(|k| precision_at_k(ranking, qrels, k)),
            ap: average_precision(ranking, qrels, options),
        }
    }

    pub fn precision_at(&self, k: usize) -> Option<f64> {
        K_GRID.iter().position(|&g| g == k).map(|i| self.precision[i])
    }

    fn values(&self) -> Vec<f64> {
        let mut v = vec![self.rr, self.r_precision];
        v.extend_from_slice(&self.precision);
        v.push(self.ap);
        v
    }
}

/// A report column, used to render arbitrary column subsets and orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Rr,
    RPrecision,
    PrecisionAt(usize),
    Ap,
}

impl Column {
    pub fn header(self, aggregate: bool) -> String {
        match self {
            Column::Rr => "RR".into(),
            Column::RPrecision => "R-P".into(),
            Column::PrecisionAt(k) => format!("P@{k}"),
            Column::Ap if aggregate => "mAP".into(),
            Column::Ap => "AP".into(),
        }
    }

    fn value(self, m: &TopicMetrics) -> f64 {
        match self {
            Column::Rr => m.rr,
            Column::RPrecision => m.r_precision,
            Column::PrecisionAt(k) => m.precision_at(k).expect("k outside the report grid"),
            Column::Ap => m.ap,
        }
    }
}

/// The full report layout: RR, R-P, P@1..P@30, AP.
pub fn standard_columns() -> Vec<Column> {
    let mut cols = vec![Column::Rr, Column::RPrecision];
    cols.extend(K_GRID.iter().map(|&k| Column::PrecisionAt(k)));
    cols.push(Column::Ap);
    cols
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub topics: Vec<TopicMetrics>,
    /// Arithmetic means over topics; `aggregate.ap` is mAP.
    pub aggregate: TopicMetrics,
    pub unjudged: usize,
}

impl MetricReport {
    pub fn from_topics(topics: Vec<TopicMetrics>, unjudged: usize) -> Self {
        let n = topics.len().max(1) as f64;
        let mut sums = [0.0; 11];
        for t in &topics {
            for (s, v) in sums.iter_mut().zip(t.values()) {
                *s += v;
            }
        }
        let mean: Vec<f64> = sums.iter().map(|s| s / n).collect();
        let aggregate = TopicMetrics {
            topic_id: "ALL".into(),
            rr: mean[0],
            r_precision: mean[1],
            precision: mean[2..10].try_into().unwrap(),
            ap: mean[10],
        };
        MetricReport {
            topics,
            aggregate,
            unjudged,
        }
    }

    pub fn map(&self) -> f64 {
        self.aggregate.ap
    }

    /// Tab-separated rows for the given columns, 4 fractional digits.
    pub fn render_columns(&self, columns: &[Column]) -> String {
        let mut out = String::from("topic");
        for c in columns {
            out.push('\t');
            out.push_str(&c.header(false));
        }
        out.push('\n');
        for row in self.topics.iter().chain(std::iter::once(&self.aggregate)) {
            out.push_str(&row.topic_id);
            for c in columns {
                let _ = write!(out, "\t{:.4}", c.value(row));
            }
            out.push('\n');
        }
        out
    }

    /// The aggregate row alone, values only.
    pub fn aggregate_row(&self, columns: &[Column]) -> String {
        columns
            .iter()
            .map(|c| format!("{:.4}", c.value(&self.aggregate)))
            .collect::<Vec<_>>()
            .join("\t")
    }

    /// Full report: standard columns plus an unjudged tally line.
    pub fn render(&self) -> String {
        let mut out = self.render_columns(&standard_columns());
        let _ = writeln!(out, "# unjudged\t{}", self.unjudged);
        out
    }
}

/// Scores every topic of `run`. Topics judged but absent from the run are ignored.
pub fn evaluate_run(run: &RankedRun, qrels: &RelevanceJudgments, options: ApOptions) -> Result<MetricReport> {
    let mut rows = Vec::with_capacity(run.topics.len());
    let mut unjudged = 0;
    for (topic, tweets) in &run.topics {
        let judged = qrels
            .topic(topic)
            .ok_or_else(|| MetricsError::UnknownTopic(topic.clone()))?;
        let ranking: Vec<&str> = tweets.iter().map(|t| t.tweet_id.as_str()).collect();
        unjudged += ranking.iter().filter(|id| !judged.contains_key(**id)).count();
        rows.push(TopicMetrics::compute(topic, &ranking, judged, options));
    }
    Ok(MetricReport::from_topics(rows, unjudged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rank::{rank_topics, ScoredTweet};
    use proptest::prelude::*;

    /// Ranking `0..n` with judgments from `pattern`, plus `extra` relevant
    /// tweets that were not retrieved.
    fn fixture(pattern: &[u8], extra: usize) -> (Vec<String>, TopicJudgments) {
        let ids: Vec<String> = (0..pattern.len()).map(|i| format!("d{i}")).collect();
        let mut q: TopicJudgments = ids.iter().cloned().zip(pattern.iter().map(|&p| p == 1)).collect();
        for i in 0..extra {
            q.insert(format!("x{i}"), true);
        }
        (ids, q)
    }

    fn refs(ids: &[String]) -> Vec<&str> {
        ids.iter().map(String::as_str).collect()
    }

    #[test]
    fn precision_examples() {
        let (ids, q) = fixture(&[1, 1, 0], 0);
        assert_eq!(precision_at_k(&refs(&ids), &q, 3), 2.0 / 3.0);
        let (ids, q) = fixture(&[1, 1, 1], 0);
        assert_eq!(precision_at_k(&refs(&ids), &q, 3), 1.0);
        let (ids, q) = fixture(&[1, 1], 0);
        assert_eq!(precision_at_k(&refs(&ids), &q, 5), 0.4);
    }

    #[test]
    fn average_precision_examples() {
        let (ids, q) = fixture(&[1, 0, 1, 0], 0);
        let ap = average_precision(&refs(&ids), &q, ApOptions::default());
        assert!((ap - 0.5 * (1.0 + 2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(format!("{ap:.4}"), "0.8333");
        let (ids, q) = fixture(&[1, 1, 1, 0, 0], 0);
        assert_eq!(average_precision(&refs(&ids), &q, ApOptions::default()), 1.0);
        let (ids, q) = fixture(&[0, 0, 0], 2);
        assert_eq!(average_precision(&refs(&ids), &q, ApOptions::default()), 0.0);
        let (ids, q) = fixture(&[0, 0], 0);
        assert_eq!(average_precision(&refs(&ids), &q, ApOptions::default()), 0.0);
    }

    #[test]
    fn cutoff_and_normalization() {
        // Relevant at ranks 1 and 4, R = 3 (one never retrieved).
        let (ids, q) = fixture(&[1, 0, 0, 1], 1);
        let r = refs(&ids);
        let full = average_precision(&r, &q, ApOptions::default());
        assert!((full - (1.0 + 0.5) / 3.0).abs() < 1e-15);
        let cut = ApOptions { cutoff: Some(2), normalization: ApNormalization::TotalRelevant };
        assert!((average_precision(&r, &q, cut) - 1.0 / 3.0).abs() < 1e-15);
        let cut_min = ApOptions { cutoff: Some(2), normalization: ApNormalization::MinRelevantCutoff };
        assert!((average_precision(&r, &q, cut_min) - 0.5).abs() < 1e-15);
        let no_cut_min = ApOptions { cutoff: None, normalization: ApNormalization::MinRelevantCutoff };
        assert_eq!(average_precision(&r, &q, no_cut_min), full);
    }

    #[test]
    fn rr_and_r_precision_examples() {
        let (ids, q) = fixture(&[1, 0], 0);
        assert_eq!(reciprocal_rank(&refs(&ids), &q), 1.0);
        let (ids, q) = fixture(&[0, 1, 0], 0);
        assert_eq!(reciprocal_rank(&refs(&ids), &q), 0.5);
        let (ids, q) = fixture(&[0, 0], 0);
        assert_eq!(reciprocal_rank(&refs(&ids), &q), 0.0);
        assert_eq!(r_precision(&refs(&ids), &q), 0.0);
        let (ids, q) = fixture(&[1, 0, 1], 0);
        assert_eq!(r_precision(&refs(&ids), &q), 0.5);
        let (ids, q) = fixture(&[1, 1, 0], 0);
        assert_eq!(r_precision(&refs(&ids), &q), 1.0);
    }

    fn run_of(topic: &str, ids: &[String]) -> RankedRun {
        let n = ids.len() as f64;
        let scored: Vec<ScoredTweet> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let s = 1.0 - i as f64 / n;
                ScoredTweet {
                    topic_id: topic.into(),
                    tweet_id: id.clone(),
                    p_negative: (1.0 - s) / 2.0,
                    p_positive: (1.0 + s) / 2.0,
                    score: s,
                }
            })
            .collect();
        rank_topics(&scored, "r").unwrap()
    }

    #[test]
    fn perfect_single_topic() {
        let (ids, q) = fixture(&[1, 1, 1, 1, 0, 0], 0);
        let qrels = RelevanceJudgments { topics: [("T".to_string(), q)].into() };
        let report = evaluate_run(&run_of("T", &ids), &qrels, ApOptions::default()).unwrap();
        let a = &report.aggregate;
        assert_eq!((a.rr, a.r_precision, a.ap), (1.0, 1.0, 1.0));
        assert_eq!(a.precision_at(1), Some(1.0));
        assert_eq!(a.precision_at(3), Some(1.0));
        assert_eq!(a.precision_at(5), Some(0.8));
        assert_eq!(a.precision_at(10), Some(0.4));
    }

    #[test]
    fn unknown_topic_and_unjudged_ids() {
        let (ids, q) = fixture(&[1, 0], 0);
        let qrels = RelevanceJudgments { topics: [("T".to_string(), q)].into() };
        let err = evaluate_run(&run_of("U", &ids), &qrels, ApOptions::default()).unwrap_err();
        assert!(err.to_string().contains('U'));
        let mut extended = ids.clone();
        extended.push("ghost".into());
        let report = evaluate_run(&run_of("T", &extended), &qrels, ApOptions::default()).unwrap();
        assert_eq!(report.unjudged, 1);
        assert!(report.render().ends_with("# unjudged\t1\n"));
    }

    #[test]
    fn render_layout() {
        let (ids, q) = fixture(&[0, 1], 0);
        let qrels = RelevanceJudgments { topics: [("T".to_string(), q)].into() };
        let report = evaluate_run(&run_of("T", &ids), &qrels, ApOptions::default()).unwrap();
        let text = report.render();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "topic\tRR\tR-P\tP@1\tP@3\tP@5\tP@10\tP@15\tP@20\tP@25\tP@30\tAP");
        assert_eq!(
            lines[1],
            "T\t0.5000\t0.0000\t0.0000\t0.3333\t0.2000\t0.1000\t0.0667\t0.0500\t0.0400\t0.0333\t0.5000"
        );
        assert!(lines[2].starts_with("ALL\t0.5000"));
    }

    #[test]
    fn qrels_parsing() {
        let q = read_qrels(&b"T1\ta\t1\nT1\tb\t0\n\nT2\tc\t1\n"[..]).unwrap();
        assert_eq!(q.topics.len(), 2);
        assert!(q.topic("T1").unwrap()["a"]);
        assert_eq!(read_qrels(q.to_tsv().as_bytes()).unwrap(), q);
        assert!(matches!(read_qrels(&b"T1\ta\t2\n"[..]), Err(MetricsError::Parse { line: 1, .. })));
        assert!(matches!(read_qrels(&b"T1\ta\t1\nT1\ta\t0\n"[..]), Err(MetricsError::Duplicate { .. })));
    }

    fn pattern_strategy() -> impl Strategy<Value = (Vec<u8>, usize)> {
        (proptest::collection::vec(0u8..2, 1..40), 0usize..3)
    }

    proptest! {
        #[test]
        fn all_metrics_in_unit_interval((pattern, extra) in pattern_strategy()) {
            let (ids, q) = fixture(&pattern, extra);
            let m = TopicMetrics::compute("T", &refs(&ids), &q, ApOptions::default());
            for v in m.values() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn flipping_a_top_k_item_adds_one_over_k(
            (pattern, extra) in pattern_strategy(),
            k_index in 0usize..8,
            pos in 0usize..40,
        ) {
            let k = K_GRID[k_index];
            let pos = pos % pattern.len();
            prop_assume!(pos < k && pattern[pos] == 0);
            let (ids, q) = fixture(&pattern, extra);
            let before = precision_at_k(&refs(&ids), &q, k);
            let mut flipped = pattern.clone();
            flipped[pos] = 1;
            let (ids, q) = fixture(&flipped, extra);
            let after = precision_at_k(&refs(&ids), &q, k);
            prop_assert!((after - before - 1.0 / k as f64).abs() < 1e-12);
        }

        #[test]
        fn ap_is_one_exactly_when_relevant_first((pattern, extra) in pattern_strategy()) {
            let (ids, q) = fixture(&pattern, extra);
            let ap = average_precision(&refs(&ids), &q, ApOptions::default());
            let r = pattern.iter().filter(|&&p| p == 1).count();
            let relevant_first = extra == 0 && r > 0 && pattern[..r].iter().all(|&p| p == 1);
            prop_assert_eq!((ap - 1.0).abs() < 1e-12, relevant_first);
        }

        #[test]
        fn moving_relevant_up_never_lowers_ap((pattern, extra) in pattern_strategy(), i in 0usize..40) {
            let i = i % pattern.len();
            prop_assume!(i > 0 && pattern[i] == 1 && pattern[i - 1] == 0);
            let (ids, q) = fixture(&pattern, extra);
            let before = average_precision(&refs(&ids), &q, ApOptions::default());
            let mut swapped = refs(&ids);
            swapped.swap(i, i - 1);
            let after = average_precision(&swapped, &q, ApOptions::default());
            prop_assert!(after >= before - 1e-15);
        }

        #[test]
        fn map_is_mean_of_ap(aps in proptest::collection::vec(0.0f64..1.0, 1..20)) {
            let rows: Vec<TopicMetrics> = aps
                .iter()
                .enumerate()
                .map(|(i, &ap)| TopicMetrics {
                    topic_id: format!("T{i}"),
                    rr: 0.0,
                    r_precision: 0.0,
                    precision: [0.0; 8],
                    ap,
                })
                .collect();
            let report = MetricReport::from_topics(rows, 0);
            let mean = aps.iter().sum::<f64>() / aps.len() as f64;
            prop_assert_eq!(report.map(), mean);
        }
    }
}
