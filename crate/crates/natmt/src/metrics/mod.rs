//! Lexical-diversity and translation-accuracy metrics.

mod bleu;
mod table;

pub use bleu::bleu;
pub use table::{
    build_translation_table, cdu, ptf, LexicalTranslationTable, TableConfig,
};

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::corpus::Token;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("metric undefined on empty text")]
    EmptyText,
    #[error("metric requires at least {0} tokens")]
    TooShort(usize),
    #[error("hypothesis/reference length mismatch: {hypotheses} vs {references}")]
    LengthMismatch {
        hypotheses: usize,
        references: usize,
    },
    #[error("frequency word list is empty")]
    EmptyTopList,
    #[error("translation table is empty")]
    EmptyTable,
    #[error("no relevant source word observed in the outputs")]
    NoRelevantWords,
    #[error("parallel corpus is empty")]
    EmptyCorpus,
}

/// Type-token ratio: distinct tokens over total tokens.
pub fn ttr(tokens: &[Token]) -> Result<f64, MetricsError> {
    if tokens.is_empty() {
        return Err(MetricsError::EmptyText);
    }
    let types: HashSet<&str> = tokens.iter().map(Token::as_str).collect();
    Ok(types.len() as f64 / tokens.len() as f64)
}

/// Yule's I from the frequency spectrum: V² / (Σ i²·f(i,N) − V).
/// Returns `None` when the denominator vanishes (every token distinct),
/// which callers report as undefined.
pub fn yules_i(tokens: &[Token]) -> Result<Option<f64>, MetricsError> {
    if tokens.len() < 2 {
        return Err(MetricsError::TooShort(2));
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for t in tokens {
        *freq.entry(t.as_str()).or_insert(0) += 1;
    }
    let v = freq.len() as f64;
    // group type counts by occurrence count i: Σ_i i² · f(i, N)
    let mut spectrum: HashMap<usize, usize> = HashMap::new();
    for &count in freq.values() {
        *spectrum.entry(count).or_insert(0) += 1;
    }
    let sum: f64 = spectrum
        .iter()
        .map(|(&i, &f)| (i * i * f) as f64)
        .sum();
    let denom = sum - v;
    if denom == 0.0 {
        Ok(None)
    } else {
        Ok(Some(v * v / denom))
    }
}

fn mtld_directional<'a>(
    tokens: impl Iterator<Item = &'a Token>,
    n: usize,
    threshold: f64,
) -> f64 {
    let mut factors = 0.0f64;
    let mut types: HashSet<&str> = HashSet::new();
    let mut count = 0usize;
    for t in tokens {
        count += 1;
        types.insert(t.as_str());
        let running = types.len() as f64 / count as f64;
        if running < threshold {
            factors += 1.0;
            types.clear();
            count = 0;
        }
    }
    if count > 0 {
        let remainder = types.len() as f64 / count as f64;
        factors += (1.0 - remainder) / (1.0 - threshold);
    }
    if factors == 0.0 {
        // running TTR never reached the threshold and the remainder is
        // perfectly diverse; clamp to the text length
        n as f64
    } else {
        n as f64 / factors
    }
}

/// Measure of textual lexical diversity: mean factor length at the running
/// TTR threshold, averaged over forward and reverse scans (partial factors
/// included).
pub fn mtld(tokens: &[Token], threshold: f64) -> Result<f64, MetricsError> {
    if tokens.is_empty() {
        return Err(MetricsError::EmptyText);
    }
    assert!((0.0..1.0).contains(&threshold), "threshold must be in [0,1)");
    let n = tokens.len();
    let fwd = mtld_directional(tokens.iter(), n, threshold);
    let rev = mtld_directional(tokens.iter().rev(), n, threshold);
    Ok((fwd + rev) / 2.0)
}

pub const MTLD_THRESHOLD: f64 = 0.72;

/// Fraction of tokens that appear in the frequent-word list (lower means
/// lexically richer output).
pub fn b1(tokens: &[Token], top_words: &HashSet<String>) -> Result<f64, MetricsError> {
    if tokens.is_empty() {
        return Err(MetricsError::EmptyText);
    }
    if top_words.is_empty() {
        return Err(MetricsError::EmptyTopList);
    }
    let hits = tokens
        .iter()
        .filter(|t| top_words.contains(t.as_str()))
        .count();
    Ok(hits as f64 / tokens.len() as f64)
}

/// The `n` most frequent words of a token stream (frequency descending,
/// ties broken lexicographically), for the B1 list.
pub fn top_frequent_words<'a>(
    tokens: impl Iterator<Item = &'a Token>,
    n: usize,
) -> Vec<String> {
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for t in tokens {
        *freq.entry(t.as_str()).or_insert(0) += 1;
    }
    let mut items: Vec<(&str, usize)> = freq.into_iter().collect();
    items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    items.truncate(n);
    items.into_iter().map(|(w, _)| w.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn toks(text: &str) -> Vec<Token> {
        tokenize(text, true).tokens
    }

    #[test]
    fn ttr_hand_values() {
        assert_eq!(ttr(&toks("a b a b")).unwrap(), 0.5);
        assert_eq!(ttr(&toks("a b c")).unwrap(), 1.0);
        assert!((ttr(&toks("a a a")).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(ttr(&[]), Err(MetricsError::EmptyText)));
    }

    #[test]
    fn yules_hand_values() {
        // "a a b": V=2, Σ i²f(i) = 1·1 + 4·1 = 5 → 4/(5−2) = 4/3
        let v = yules_i(&toks("a a b")).unwrap().unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-12);
        // "a a b b": V=2, Σ = 4·2 = 8 → 4/6 = 2/3
        let v = yules_i(&toks("a a b b")).unwrap().unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn yules_all_distinct_is_undefined() {
        assert_eq!(yules_i(&toks("a b")).unwrap(), None);
        assert!(matches!(yules_i(&toks("a")), Err(MetricsError::TooShort(2))));
    }

    #[test]
    fn mtld_repeated_token_steps_through_to_two() {
        // "a a a a": a factor completes at every second token in both scans
        assert_eq!(mtld(&toks("a a a a"), MTLD_THRESHOLD).unwrap(), 2.0);
    }

    #[test]
    fn mtld_clamps_fully_diverse_text() {
        // running TTR stays at 1.0: zero factors in both directions
        let t = toks("a b c d e");
        assert_eq!(mtld(&t, MTLD_THRESHOLD).unwrap(), 5.0);
    }

    #[test]
    fn mtld_is_order_sensitive() {
        let a = toks("a a b b c c a a b b c c");
        let b = toks("a b c a b c a b c a b c");
        assert_ne!(mtld(&a, MTLD_THRESHOLD).unwrap(), mtld(&b, MTLD_THRESHOLD).unwrap());
    }

    #[test]
    fn order_invariant_metrics_ignore_permutation() {
        let a = toks("x y z x y w v");
        let mut b = a.clone();
        b.reverse();
        assert_eq!(ttr(&a).unwrap(), ttr(&b).unwrap());
        assert_eq!(yules_i(&a).unwrap(), yules_i(&b).unwrap());
        let top: HashSet<String> = ["x".to_string(), "y".to_string()].into();
        assert_eq!(b1(&a, &top).unwrap(), b1(&b, &top).unwrap());
    }

    #[test]
    fn b1_hand_values() {
        let top: HashSet<String> = ["de".to_string()].into();
        assert!((b1(&toks("de kat de"), &top).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(b1(&toks("kat hond"), &top).unwrap(), 0.0);
        assert_eq!(b1(&toks("de de"), &top).unwrap(), 1.0);
    }

    #[test]
    fn top_words_order_is_frequency_then_lexicographic() {
        let t = toks("b b a a c");
        let top = top_frequent_words(t.iter(), 2);
        assert_eq!(top, vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn duplicating_text_lowers_or_keeps_ttr_and_keeps_b1() {
        let t = toks("p q r p");
        let mut doubled = t.clone();
        doubled.extend(t.iter().cloned());
        assert!(ttr(&doubled).unwrap() <= ttr(&t).unwrap());
        let top: HashSet<String> = ["p".to_string()].into();
        assert_eq!(b1(&t, &top).unwrap(), b1(&doubled, &top).unwrap());
    }
}
