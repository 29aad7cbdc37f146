use super::{Scheme, TokenSequence, Vocabulary};

pub const DEFAULT_MAX_WORD_CHARS: usize = 100;

/// Segments one word greedily, longest vocabulary match first. Returns `None`
/// when the word has no full segmentation or is longer than `max_word_chars`.
pub fn wordpiece_word(word: &str, vocab: &Vocabulary, max_word_chars: usize) -> Option<Vec<u32>> {
    let chars: Vec<char> = word.chars().collect();
    if chars.len() > max_word_chars {
        return None;
    }
    let prefix = vocab.continuation_prefix();
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::new();
    while start < chars.len() {
        let mut end = chars.len();
        let mut found = None;
        while start < end {
            candidate.clear();
            if start > 0 {
                candidate.push_str(prefix);
            }
            candidate.extend(&chars[start..end]);
            if let Some(id) = vocab.id(&candidate) {
                found = Some(id);
                break;
            }
            end -= 1;
        }
        pieces.push(found?);
        start = end;
    }
    Some(pieces)
}

/// Whitespace-splits `text` and segments every word; unsegmentable words
/// become the unknown token.
pub fn wordpiece_tokenize(text: &str, vocab: &Vocabulary, max_word_chars: usize) -> TokenSequence {
    assert_eq!(vocab.scheme(), Scheme::WordPiece, "wordpiece_tokenize needs a WordPiece vocabulary");
    let mut ids = Vec::new();
    for word in text.split_whitespace() {
        match wordpiece_word(word, vocab, max_word_chars) {
            Some(pieces) => ids.extend(pieces),
            None => ids.push(vocab.unk_id),
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
