//! Subword tokenization.
//!
//! Two schemes share one [`Vocabulary`] type: WordPiece (greedy longest match
//! with a continuation prefix) and BPE driven by a ranked [`MergeTable`].
//! [`overlap`] measures how much of a corpus a vocabulary covers verbatim.

mod bpe;
pub mod overlap;
mod wordpiece;

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

pub use bpe::{bpe_tokenize, bpe_word, byte_symbol, load_merges, BpeMode, MergeTable};
pub use overlap::{vocab_overlap, Normalizer, OverlapReport};
pub use wordpiece::{wordpiece_tokenize, wordpiece_word, DEFAULT_MAX_WORD_CHARS};

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: duplicate token `{token}`")]
    DuplicateToken { line: usize, token: String },
    #[error("line {line}: empty token")]
    EmptyToken { line: usize },
    #[error("vocabulary is missing special token `{0}`")]
    MissingSpecial(String),
    #[error("merges line {line}: expected two space-separated symbols")]
    MalformedMerge { line: usize },
    #[error("merges line {line}: duplicate merge `{left} {right}`")]
    DuplicateMerge {
        line: usize,
        left: String,
        right: String,
    },
    #[error("merges line {line}: symbol `{symbol}` is neither a base symbol nor produced by an earlier merge")]
    UnderivableSymbol { line: usize, symbol: String },
}

pub type Result<T> = std::result::Result<T, TokenizerError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    WordPiece,
    Bpe,
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "wordpiece" => Ok(Scheme::WordPiece),
            "bpe" => Ok(Scheme::Bpe),
            other => Err(format!("unknown tokenization scheme `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecialTokens {
    pub unknown: String,
    pub start: String,
    pub end: String,
    pub padding: String,
}

impl SpecialTokens {
    /// BERT names for WordPiece, RoBERTa names for BPE.
    pub fn for_scheme(scheme: Scheme) -> Self {
        let (unknown, start, end, padding) = match scheme {
            Scheme::WordPiece => ("[UNK]", "[CLS]", "[SEP]", "[PAD]"),
            Scheme::Bpe => ("<unk>", "<s>", "</s>", "<pad>"),
        };
        SpecialTokens {
            unknown: unknown.into(),
            start: start.into(),
            end: end.into(),
            padding: padding.into(),
        }
    }
}

/// Token inventory. Ids are dense and follow insertion (file line) order.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    scheme: Scheme,
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    continuation_prefix: String,
    pub unk_id: u32,
    pub start_id: u32,
    pub end_id: u32,
    pub pad_id: u32,
}

impl Vocabulary {
    pub fn new(scheme: Scheme, tokens: Vec<String>) -> Result<Self> {
        Self::with_specials(scheme, tokens, &SpecialTokens::for_scheme(scheme))
    }

    pub fn with_specials(
        scheme: Scheme,
        tokens: Vec<String>,
        specials: &SpecialTokens,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(TokenizerError::EmptyToken { line: i + 1 });
            }
            if index.insert(tok.clone(), i as u32).is_some() {
                return Err(TokenizerError::DuplicateToken {
                    line: i + 1,
                    token: tok.clone(),
                });
            }
        }
        let lookup = |name: &String| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| TokenizerError::MissingSpecial(name.clone()))
        };
        Ok(Vocabulary {
            scheme,
            unk_id: lookup(&specials.unknown)?,
            start_id: lookup(&specials.start)?,
            end_id: lookup(&specials.end)?,
            pad_id: lookup(&specials.padding)?,
            tokens,
            index,
            continuation_prefix: "##".into(),
        })
    }

    pub fn with_continuation_prefix(mut self, prefix: &str) -> Self {
        self.continuation_prefix = prefix.to_string();
        self
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn continuation_prefix(&self) -> &str {
        &self.continuation_prefix
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn unknown_token(&self) -> &str {
        &self.tokens[self.unk_id as usize]
    }
}

/// One token per line; line `n` (1-based) gets id `n - 1`.
pub fn load_vocab(path: impl AsRef<Path>, scheme: Scheme) -> Result<Vocabulary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| TokenizerError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_vocab(&text, scheme)
}

pub fn parse_vocab(text: &str, scheme: Scheme) -> Result<Vocabulary> {
    let tokens = text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .collect();
    Vocabulary::new(scheme, tokens)
}

pub fn write_vocab(vocab: &Vocabulary, path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut out = vocab.tokens.join("\n");
    out.push('\n');
    std::fs::write(path, out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub ids: Vec<u32>,
    pub source_text: String,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// A configured tokenizer of either scheme.
#[derive(Debug, Clone)]
pub enum Tokenizer {
    WordPiece {
        vocab: Vocabulary,
        max_word_chars: usize,
    },
    Bpe {
        vocab: Vocabulary,
        merges: MergeTable,
        mode: BpeMode,
    },
}

impl Tokenizer {
    pub fn wordpiece(vocab: Vocabulary) -> Self {
        Tokenizer::WordPiece {
            vocab,
            max_word_chars: DEFAULT_MAX_WORD_CHARS,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        match self {
            Tokenizer::WordPiece { vocab, .. } | Tokenizer::Bpe { vocab, .. } => vocab,
        }
    }

    pub fn tokenize(&self, text: &str) -> TokenSequence {
        match self {
            Tokenizer::WordPiece {
                vocab,
                max_word_chars,
            } => wordpiece_tokenize(text, vocab, *max_word_chars),
            Tokenizer::Bpe {
                vocab,
                merges,
                mode,
            } => bpe_tokenize(text, vocab, merges, *mode),
        }
    }

    /// Model input ids: head-truncated to `max_seq_len - 2` pieces and wrapped
    /// in the start and end tokens.
    pub fn encode(&self, text: &str, max_seq_len: usize) -> Vec<u32> {
        let vocab = self.vocab();
        let seq = self.tokenize(text);
        let keep = max_seq_len.saturating_sub(2).min(seq.ids.len());
        let mut ids = Vec::with_capacity(keep + 2);
        ids.push(vocab.start_id);
        ids.extend_from_slice(&seq.ids[..keep]);
        ids.push(vocab.end_id);
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn specials() -> Vec<String> {
        ["[PAD]", "[UNK]", "[CLS]", "[SEP]"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn five_line_vocab() {
        let v = parse_vocab("[PAD]\n[UNK]\n[CLS]\n[SEP]\nhello\n", Scheme::WordPiece).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("hello"), Some(4));
        assert_eq!(v.token(0), Some("[PAD]"));
        assert_eq!((v.pad_id, v.unk_id, v.start_id, v.end_id), (0, 1, 2, 3));
    }

    #[test]
    fn duplicate_token_reports_line() {
        let err = parse_vocab("[PAD]\nhello\n[UNK]\n[CLS]\n[SEP]\nhello\n", Scheme::WordPiece)
            .unwrap_err();
        assert!(matches!(err, TokenizerError::DuplicateToken { line: 6, ref token } if token == "hello"));
    }

    #[test]
    fn missing_special_is_named() {
        let err = parse_vocab("[PAD]\n[UNK]\n[CLS]\nhello\n", Scheme::WordPiece).unwrap_err();
        assert!(matches!(err, TokenizerError::MissingSpecial(ref s) if s == "[SEP]"));
    }

    #[test]
    fn large_vocab_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let mut tokens = specials();
        tokens.extend((4..64_000).map(|i| format!("w{i}")));
        std::fs::write(&path, tokens.join("\n")).unwrap();
        let v = load_vocab(&path, Scheme::WordPiece).unwrap();
        assert_eq!(v.len(), 64_000);
        assert_eq!(v.id("w63999"), Some(63_999));
    }

    #[test]
    fn encode_truncates_head_and_wraps() {
        let mut tokens = specials();
        tokens.extend(["a", "b", "c"].iter().map(|s| s.to_string()));
        let tok = Tokenizer::wordpiece(Vocabulary::new(Scheme::WordPiece, tokens).unwrap());
        assert_eq!(tok.encode("a b c", 64), vec![2, 4, 5, 6, 3]);
        assert_eq!(tok.encode("a b c", 4), vec![2, 4, 5, 3]);
    }
}
