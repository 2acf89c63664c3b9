//! Deterministic whitespace + punctuation tokenizer.

use super::{Sentence, Token};

/// Tokenizes a raw string: whitespace runs separate tokens, maximal
/// alphanumeric runs become word tokens, and every other non-whitespace
/// character becomes a single-character token. Optional lowercasing.
///
/// Idempotent under re-join: tokenizing the space-joined token sequence of a
/// sentence reproduces the same tokens.
pub fn tokenize(raw: &str, lowercase: bool) -> Sentence {
    // Case-fold before classifying characters: some lowercase mappings emit
    // combining marks, which must be classified like any other input char for
    // re-tokenization to be stable.
    let text = if lowercase {
        std::borrow::Cow::Owned(raw.to_lowercase())
    } else {
        std::borrow::Cow::Borrowed(raw)
    };
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            flush(&mut word, &mut tokens);
        } else if ch.is_alphanumeric() {
            word.push(ch);
        } else {
            flush(&mut word, &mut tokens);
            tokens.push(Token::new(ch.to_string()));
        }
    }
    flush(&mut word, &mut tokens);
    Sentence {
        tokens,
        raw: raw.to_string(),
    }
}

fn flush(word: &mut String, tokens: &mut Vec<Token>) {
    if !word.is_empty() {
        tokens.push(Token::new(std::mem::take(word)));
    }
}
