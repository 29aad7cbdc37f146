//! Seeded synthetic tweets, vocabularies and translation tables.
//!
//! Positive tweets draw their signal words from a "claim" lexicon (numbers,
//! officials, studies), negative ones from a "chatter" lexicon. Both share a
//! filler lexicon and one topic keyword. A configurable fraction of tweets
//! gets one signal word swapped for the opposite lexicon, so the classes
//! overlap a little.

use crate::corpus::{Dataset, Tweet};
use crate::rng::{below, seeded, shuffle, unit, Rng};
use crate::tokenizer::{Scheme, Tokenizer, Vocabulary};

pub const SOURCE_LANG: &str = "ar";
pub const PIVOT_LANG: &str = "en";

pub const CLAIM_WORDS: &[&str] = &[
    "vaccine", "cure", "deaths", "percent", "million", "government", "study", "confirmed",
    "report", "cases", "officials", "data", "minister", "billion", "hospital", "tested",
];

pub const CHATTER_WORDS: &[&str] = &[
    "lol", "love", "pray", "hope", "stay", "safe", "thanks", "friends", "mood", "happy", "bored",
    "home", "miss", "funny", "weekend", "coffee",
];

pub const FILLER_WORDS: &[&str] = &[
    "the", "a", "is", "of", "and", "to", "in", "this", "today", "now", "new", "people", "just",
    "we", "all", "so", "about", "our",
];

pub const TOPIC_WORDS: &[&str] = &[
    "virus", "election", "economy", "climate", "border", "schools", "oil", "football",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub tweets: usize,
    pub topics: usize,
    pub positive_fraction: f64,
    /// Probability that a tweet carries one signal word of the opposite class.
    pub noise: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            tweets: 200,
            topics: 4,
            positive_fraction: 0.35,
            noise: 0.1,
            seed: 2020,
        }
    }
}

fn pick<'a>(words: &[&'a str], rng: &mut Rng) -> &'a str {
    words[below(rng, words.len() as u64) as usize]
}

fn tweet_text(positive: bool, topic: usize, noise: f64, rng: &mut Rng) -> String {
    let (own, other) = if positive {
        (CLAIM_WORDS, CHATTER_WORDS)
    } else {
        (CHATTER_WORDS, CLAIM_WORDS)
    };
    let signal = 2 + below(rng, 3) as usize;
    let filler = 3 + below(rng, 5) as usize;
    let mut words: Vec<&str> = Vec::with_capacity(signal + filler + 1);
    words.push(TOPIC_WORDS[topic % TOPIC_WORDS.len()]);
    for _ in 0..signal {
        words.push(pick(own, rng));
    }
    if unit(rng) < noise {
        words[1] = pick(other, rng);
    }
    for _ in 0..filler {
        words.push(pick(FILLER_WORDS, rng));
    }
    shuffle(&mut words, rng);
    words.join(" ")
}

/// Generates a labeled corpus with exactly `round(tweets · positive_fraction)`
/// positives. Topic ids are `T1..Tn`, tweet ids are zero-padded counters.
pub fn generate(spec: &CorpusSpec) -> Dataset {
    let mut rng = seeded(spec.seed);
    let positives = (spec.tweets as f64 * spec.positive_fraction).round() as usize;
    let mut labels: Vec<bool> = (0..spec.tweets).map(|i| i < positives).collect();
    shuffle(&mut labels, &mut rng);
    let topics = spec.topics.max(1);
    let tweets = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let topic = below(&mut rng, topics as u64) as usize;
            let text = tweet_text(label, topic, spec.noise, &mut rng);
            Tweet::new(&format!("T{}", topic + 1), &format!("{:05}", i + 1), &text, Some(label))
        })
        .collect();
    Dataset::new("synthetic", tweets).expect("generated ids are unique")
}

/// The 200-tweet, 4-topic corpus used by the shipped example configuration.
pub fn bundled_corpus() -> Dataset {
    generate(&CorpusSpec::default())
}

/// 32 distinct tweets, 16 per class, with no lexical overlap between the
/// classes' signal words: linearly separable on bag-of-words features.
pub fn separable_corpus() -> Dataset {
    let mut rng = seeded(32);
    let mut seen = std::collections::HashSet::new();
    let mut tweets = Vec::with_capacity(32);
    while tweets.len() < 32 {
        let label = tweets.len() % 2 == 0;
        let text = tweet_text(label, tweets.len() % 4, 0.0, &mut rng);
        if seen.insert(text.clone()) {
            let id = format!("{:02}", tweets.len() + 1);
            tweets.push(Tweet::new("T1", &id, &text, Some(label)));
        }
    }
    Dataset::new("separable", tweets).expect("generated ids are unique")
}

/// A corpus with exactly `total` tweets of which `positive` are labeled 1.
pub fn balance_fixture(total: usize, positive: usize, seed: u64) -> Dataset {
    assert!(positive <= total, "positive count exceeds total");
    generate(&CorpusSpec {
        tweets: total,
        topics: 4,
        positive_fraction: positive as f64 / total.max(1) as f64,
        noise: 0.0,
        seed,
    })
}

/// WordPiece vocabulary: specials, every lexicon word, then single letters
/// and their continuation forms so any lowercase ASCII word is segmentable.
pub fn vocabulary() -> Vocabulary {
    let mut tokens: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for list in [CLAIM_WORDS, CHATTER_WORDS, FILLER_WORDS, TOPIC_WORDS] {
        tokens.extend(list.iter().map(|w| w.to_string()));
    }
    for c in 'a'..='z' {
        if !tokens.iter().any(|t| t.len() == 1 && t.starts_with(c)) {
            tokens.push(c.to_string());
        }
    }
    for c in 'a'..='z' {
        tokens.push(format!("##{c}"));
    }
    Vocabulary::new(Scheme::WordPiece, tokens).expect("synthetic vocabulary is well formed")
}

pub fn tokenizer() -> Tokenizer {
    Tokenizer::wordpiece(vocabulary())
}

/// Mock translation table in `source<TAB>target<TAB>word<TAB>translation`
/// form. Source-to-pivot reverses each word; pivot-to-source maps it back to
/// a neighbouring word of the same lexicon, so back-translation paraphrases
/// without changing the class signal.
pub fn translation_table() -> String {
    let mut out = String::new();
    for list in [CLAIM_WORDS, CHATTER_WORDS, FILLER_WORDS, TOPIC_WORDS] {
        for (i, word) in list.iter().enumerate() {
            let pivot: String = word.chars().rev().collect();
            let back = if std::ptr::eq(list, FILLER_WORDS) || std::ptr::eq(list, TOPIC_WORDS) {
                word
            } else {
                list[(i + 1) % list.len()]
            };
            out.push_str(&format!("{SOURCE_LANG}\t{PIVOT_LANG}\t{word}\t{pivot}\n"));
            out.push_str(&format!("{PIVOT_LANG}\t{SOURCE_LANG}\t{pivot}\t{back}\n"));
        }
    }
    out
}
