//! Corpus-level BLEU-4 with brevity penalty and epsilon smoothing for
//! zero n-gram counts.

use std::collections::HashMap;

use super::MetricsError;
use crate::corpus::Sentence;

const MAX_ORDER: usize = 4;
/// Numerator floor substituted for zero clipped-match counts so that toy
/// corpora yield nonzero scores.
const SMOOTH_EPS: f64 = 0.1;

/// Corpus BLEU in [0, 100]: geometric mean of modified n-gram precisions
/// (n = 1..4) times the brevity penalty, single reference per hypothesis.
pub fn bleu(hypotheses: &[Sentence], references: &[Sentence]) -> Result<f64, MetricsError> {
    if hypotheses.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            hypotheses: hypotheses.len(),
            references: references.len(),
        });
    }
    if references.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }

    let mut matched = [0u64; MAX_ORDER];
    let mut total = [0u64; MAX_ORDER];
    let mut hyp_len = 0u64;
    let mut ref_len = 0u64;

    for (h, r) in hypotheses.iter().zip(references) {
        let h_tokens = h.token_strs();
        let r_tokens = r.token_strs();
        hyp_len += h_tokens.len() as u64;
        ref_len += r_tokens.len() as u64;
        for n in 1..=MAX_ORDER {
            let r_counts = ngram_counts(&r_tokens, n);
            let mut h_counts = ngram_counts(&h_tokens, n);
            for (gram, count) in h_counts.drain() {
                total[n - 1] += count;
                let clip = r_counts.get(&gram).copied().unwrap_or(0);
                matched[n - 1] += count.min(clip);
            }
        }
    }

    if hyp_len == 0 {
        return Ok(0.0);
    }
    // orders the corpus is too short to instantiate are skipped, so the
    // identity property holds on short corpora as well
    let orders: Vec<usize> = (0..MAX_ORDER).filter(|&n| total[n] > 0).collect();
    if orders.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for &n in &orders {
        let p = if matched[n] == 0 {
            SMOOTH_EPS / total[n] as f64
        } else {
            matched[n] as f64 / total[n] as f64
        };
        log_sum += p.ln() / orders.len() as f64;
    }
    let bp = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(100.0 * bp * log_sum.exp())
}

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<Vec<&'a str>, u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}
