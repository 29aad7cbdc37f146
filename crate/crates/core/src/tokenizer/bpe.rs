use std::collections::{HashMap, HashSet};
use std::path::Path;

use super::{Result, Scheme, TokenSequence, TokenizerError, Vocabulary};

/// Ordered symbol-pair merges; a merge's rank is its position.
#[derive(Debug, Clone, Default)]
pub struct MergeTable {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

impl MergeTable {
    /// Every symbol in a pair must be a single character or the output of an
    /// earlier merge.
    pub fn new(merges: Vec<(String, String)>) -> Result<Self> {
        let mut ranks = HashMap::with_capacity(merges.len());
        let mut produced: HashSet<String> = HashSet::new();
        for (rank, (left, right)) in merges.iter().enumerate() {
            for sym in [left, right] {
                if sym.chars().count() != 1 && !produced.contains(sym) {
                    return Err(TokenizerError::UnderivableSymbol {
                        line: rank + 1,
                        symbol: sym.clone(),
                    });
                }
            }
            if ranks.insert((left.clone(), right.clone()), rank).is_some() {
                return Err(TokenizerError::DuplicateMerge {
                    line: rank + 1,
                    left: left.clone(),
                    right: right.clone(),
                });
            }
            produced.insert(format!("{left}{right}"));
        }
        Ok(MergeTable { merges, ranks })
    }

    pub fn rank(&self, left: &str, right: &str) -> Option<usize> {
        self.ranks.get(&(left.to_string(), right.to_string())).copied()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }
}

/// One merge per line, `left right`; file order is rank. A leading
/// `#version` line is skipped.
pub fn load_merges(path: impl AsRef<Path>) -> Result<MergeTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| TokenizerError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_merges(&text)
}

pub fn parse_merges(text: &str) -> Result<MergeTable> {
    let mut merges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() || (i == 0 && line.starts_with("#version")) {
            continue;
        }
        let mut parts = line.split(' ');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                merges.push((l.to_string(), r.to_string()))
            }
            _ => return Err(TokenizerError::MalformedMerge { line: i + 1 }),
        }
    }
    MergeTable::new(merges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BpeMode {
    /// Words start as Unicode characters.
    #[default]
    Char,
    /// Words start as UTF-8 bytes mapped to printable stand-in characters;
    /// words after the first carry a leading space byte.
    Byte,
}

/// Printable stand-in for a raw byte, using the GPT-2 byte-to-unicode table.
pub fn byte_symbol(b: u8) -> char {
    let printable = |x: u8| (b'!'..=b'~').contains(&x) || (0xA1..=0xAC).contains(&x) || (0xAE..=0xFF).contains(&x);
    if printable(b) {
        return char::from(b);
    }
    let offset = (0..b).filter(|&x| !printable(x)).count() as u32;
    char::from_u32(256 + offset).unwrap()
}

/// Repeatedly merges the leftmost adjacent pair of lowest rank until no pair
/// in the table applies.
pub fn bpe_word(mut symbols: Vec<String>, merges: &MergeTable) -> Vec<String> {
    loop {
        let best = symbols
            .windows(2)
            .enumerate()
            .filter_map(|(i, w)| merges.rank(&w[0], &w[1]).map(|r| (r, i)))
            .min();
        let Some((_, i)) = best else {
            return symbols;
        };
        let right = symbols.remove(i + 1);
        symbols[i].push_str(&right);
    }
}

fn initial_symbols(word: &str, mode: BpeMode, leading_space: bool) -> Vec<String> {
    match mode {
        BpeMode::Char => word.chars().map(String::from).collect(),
        BpeMode::Byte => {
            let space = leading_space.then_some(b' ');
            space
                .into_iter()
                .chain(word.bytes())
                .map(|b| byte_symbol(b).to_string())
                .collect()
        }
    }
}

fn push_symbol(sym: &str, vocab: &Vocabulary, ids: &mut Vec<u32>) {
    if let Some(id) = vocab.id(sym) {
        ids.push(id);
        return;
    }
    // Fall back to characters, then to byte symbols, then to the unknown token.
    for ch in sym.chars() {
        let mut buf = [0u8; 4];
        if let Some(id) = vocab.id(ch.encode_utf8(&mut buf)) {
            ids.push(id);
            continue;
        }
        for &b in ch.encode_utf8(&mut buf).as_bytes() {
            let stand_in = byte_symbol(b).to_string();
            ids.push(vocab.id(&stand_in).unwrap_or(vocab.unk_id));
        }
    }
}

pub fn bpe_tokenize(text: &str, vocab: &Vocabulary, merges: &MergeTable, mode: BpeMode) -> TokenSequence {
    assert_eq!(vocab.scheme(), Scheme::Bpe, "bpe_tokenize needs a BPE vocabulary");
    let mut ids = Vec::new();
    for (i, word) in text.split_whitespace().enumerate() {
        for sym in bpe_word(initial_symbols(word, mode, i > 0), merges) {
            push_symbol(&sym, vocab, &mut ids);
        }
    }
    let tokens = ids
        .iter()
        .map(|&id| vocab.token(id).unwrap().to_string())
        .collect();
    TokenSequence {
        tokens,
        ids,
        source_text: text.to_string(),
    }
}
