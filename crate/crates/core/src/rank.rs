//! Logits to normalized scores, and per-topic rankings.
//!
//! A tweet's score is `p_positive - p_negative`, which equals
//! `tanh((l_pos - l_neg) / 2)`. Rankings sort by score descending and break
//! ties by ascending tweet id, so the order never depends on input order.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use thiserror::Error;

use crate::model::Logits;

#[derive(Debug, Error)]
pub enum RankError {
    #[error("duplicate tweet {tweet_id} in topic {topic_id}")]
    Duplicate { topic_id: String, tweet_id: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, RankError>;

/// Numerically stable two-class softmax: `(p_negative, p_positive)`.
pub fn softmax2(logits: Logits) -> (f64, f64) {
    let max = logits.negative.max(logits.positive);
    let en = (logits.negative - max).exp();
    let ep = (logits.positive - max).exp();
    let sum = en + ep;
    (en / sum, ep / sum)
}

pub fn score(p_negative: f64, p_positive: f64) -> f64 {
    p_positive - p_negative
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTweet {
    pub topic_id: String,
    pub tweet_id: String,
    pub p_negative: f64,
    pub p_positive: f64,
    pub score: f64,
}

impl ScoredTweet {
    pub fn from_logits(topic_id: &str, tweet_id: &str, logits: Logits) -> Self {
        let (p_negative, p_positive) = softmax2(logits);
        ScoredTweet {
            topic_id: topic_id.to_string(),
            tweet_id: tweet_id.to_string(),
            p_negative,
            p_positive,
            score: score(p_negative, p_positive),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedRun {
    pub run_id: String,
    /// Topics in first-seen input order, each with tweets in rank order.
    pub topics: Vec<(String, Vec<ScoredTweet>)>,
}

impl RankedRun {
    pub fn len(&self) -> usize {
        self.topics.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ranking(&self, topic_id: &str) -> Option<Vec<&str>> {
        self.topics
            .iter()
            .find(|(t, _)| t == topic_id)
            .map(|(_, tweets)| tweets.iter().map(|s| s.tweet_id.as_str()).collect())
    }
}

/// Groups by topic and sorts each group by score descending, tweet id ascending.
pub fn rank_topics(scored: &[ScoredTweet], run_id: &str) -> Result<RankedRun> {
    let mut seen = HashSet::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut topics: Vec<(String, Vec<ScoredTweet>)> = Vec::new();
    for s in scored {
        if !seen.insert((s.topic_id.as_str(), s.tweet_id.as_str())) {
            return Err(RankError::Duplicate {
                topic_id: s.topic_id.clone(),
                tweet_id: s.tweet_id.clone(),
            });
        }
        let slot = *index.entry(&s.topic_id).or_insert_with(|| {
            topics.push((s.topic_id.clone(), Vec::new()));
            topics.len() - 1
        });
        topics[slot].1.push(s.clone());
    }
    for (_, tweets) in &mut topics {
        tweets.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.tweet_id.cmp(&b.tweet_id))
        });
    }
    Ok(RankedRun {
        run_id: run_id.to_string(),
        topics,
    })
}

/// `topic<TAB>tweet<TAB>score<TAB>run_id`, score with 6 fractional digits.
pub fn write_run(run: &RankedRun, mut out: impl Write) -> std::io::Result<()> {
    for (topic, tweets) in &run.topics {
        for s in tweets {
            writeln!(out, "{topic}\t{}\t{:.6}\t{}", s.tweet_id, s.score, run.run_id)?;
        }
    }
    Ok(())
}

/// Parses a run file back into per-topic rankings. Scores are kept as
/// written; lines stay in file order.
pub fn read_run(reader: impl BufRead) -> Result<RankedRun> {
    let mut run_id = None;
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut seen = HashSet::new();
    let mut topics: Vec<(String, Vec<ScoredTweet>)> = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| RankError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(RankError::Parse {
                line: line_no,
                message: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        }
        let score: f64 = fields[2].parse().map_err(|_| RankError::Parse {
            line: line_no,
            message: format!("bad score `{}`", fields[2]),
        })?;
        if !seen.insert((fields[0].to_string(), fields[1].to_string())) {
            return Err(RankError::Duplicate {
                topic_id: fields[0].into(),
                tweet_id: fields[1].into(),
            });
        }
        run_id.get_or_insert_with(|| fields[3].to_string());
        let slot = *index.entry(fields[0].to_string()).or_insert_with(|| {
            topics.push((fields[0].to_string(), Vec::new()));
            topics.len() - 1
        });
        let p_positive = (1.0 + score) / 2.0;
        topics[slot].1.push(ScoredTweet {
            topic_id: fields[0].into(),
            tweet_id: fields[1].into(),
            p_negative: 1.0 - p_positive,
            p_positive,
            score,
        });
    }
    Ok(RankedRun {
        run_id: run_id.unwrap_or_default(),
        topics,
    })
}

/// Scored file: `topic<TAB>tweet<TAB>p_negative<TAB>p_positive<TAB>score`,
/// full precision so ranking from the file matches ranking in memory.
pub fn write_scored(scored: &[ScoredTweet], mut out: impl Write) -> std::io::Result<()> {
    for s in scored {
        writeln!(
            out,
            "{}\t{}\t{:e}\t{:e}\t{:e}",
            s.topic_id, s.tweet_id, s.p_negative, s.p_positive, s.score
        )?;
    }
    Ok(())
}

pub fn read_scored(reader: impl BufRead) -> Result<Vec<ScoredTweet>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| RankError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(RankError::Parse {
                line: line_no,
                message: format!("expected 5 tab-separated fields, found {}", fields.len()),
            });
        }
        let num = |i: usize| -> Result<f64> {
            fields[i].parse().map_err(|_| RankError::Parse {
                line: line_no,
                message: format!("bad number `{}`", fields[i]),
            })
        };
        out.push(ScoredTweet {
            topic_id: fields[0].into(),
            tweet_id: fields[1].into(),
            p_negative: num(2)?,
            p_positive: num(3)?,
            score: num(4)?,
        });
    }
    Ok(out)
}

pub fn load_scored(path: impl AsRef<Path>) -> Result<Vec<ScoredTweet>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| RankError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_scored(std::io::BufReader::new(file))
}

pub fn load_run(path: impl AsRef<Path>) -> Result<RankedRun> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| RankError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_run(std::io::BufReader::new(file))
}
