//! Thresholded naturalness and content rewards and their harmonic-mean
//! combination, with a pluggable content scorer.

use std::collections::HashMap;

use crate::corpus::Sentence;
use crate::scalar::Scalar;

/// Reward thresholds and the NLL mixing weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig<S> {
    /// Naturalness threshold σ_t.
    pub sigma_t: S,
    /// Content threshold σ_c.
    pub sigma_c: S,
    /// Weight β of the supervised NLL anchor in the combined objective.
    pub beta: S,
}

impl<S: Scalar> Default for RewardConfig<S> {
    fn default() -> Self {
        RewardConfig {
            sigma_t: S::from_f64(0.5),
            sigma_c: S::from_f64(0.85),
            beta: S::from_f64(0.5),
        }
    }
}

impl<S: Scalar> RewardConfig<S> {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |v: S| v >= S::zero() && v <= S::one();
        if !unit(self.sigma_t) {
            return Err("sigma_t must lie in [0, 1]".into());
        }
        if !unit(self.sigma_c) {
            return Err("sigma_c must lie in [0, 1]".into());
        }
        if self.beta < S::zero() {
            return Err("beta must be non-negative".into());
        }
        Ok(())
    }
}

/// Thresholded classifier probability: zero below σ_t, the probability
/// itself otherwise (inclusive at the threshold).
pub fn naturalness_reward<S: Scalar>(p: S, sigma_t: S) -> S {
    if p < sigma_t {
        S::zero()
    } else {
        p
    }
}

/// Thresholded content score: zero below σ_c, the score itself otherwise
/// (inclusive at the threshold).
pub fn content_reward<S: Scalar>(c: S, sigma_c: S) -> S {
    if c < sigma_c {
        S::zero()
    } else {
        c
    }
}

/// Harmonic mean of the two component rewards; zero as soon as either
/// component is zero.
pub fn overall_reward<S: Scalar>(r_t: S, r_c: S) -> S {
    if r_t == S::zero() || r_c == S::zero() {
        S::zero()
    } else {
        let two = S::from_f64(2.0);
        two / (r_t.recip() + r_c.recip())
    }
}

/// Which reward components drive the alignment objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    /// Harmonic mean of both components.
    Both,
    /// Naturalness classifier only (r := r_t).
    ClassifierOnly,
    /// Content scorer only (r := r_c).
    ContentOnly,
}

impl RewardMode {
    pub fn parse(s: &str) -> Option<RewardMode> {
        match s {
            "both" => Some(RewardMode::Both),
            "classifier-only" | "classifier_only" => Some(RewardMode::ClassifierOnly),
            "content-only" | "content_only" => Some(RewardMode::ContentOnly),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RewardMode::Both => "both",
            RewardMode::ClassifierOnly => "classifier-only",
            RewardMode::ContentOnly => "content-only",
        }
    }
}

/// All reward components for one sampled translation.
#[derive(Debug, Clone, Copy)]
pub struct RewardBreakdown<S> {
    /// Raw classifier probability p(t₁|ŷ).
    pub naturalness_prob: S,
    /// Raw content score C(x, y, ŷ).
    pub content_score: S,
    pub r_t: S,
    pub r_c: S,
    pub r: S,
}

pub fn reward_breakdown<S: Scalar>(
    naturalness_prob: S,
    content_score: S,
    cfg: &RewardConfig<S>,
    mode: RewardMode,
) -> RewardBreakdown<S> {
    let r_t = naturalness_reward(naturalness_prob, cfg.sigma_t);
    let r_c = content_reward(content_score, cfg.sigma_c);
    let r = match mode {
        RewardMode::Both => overall_reward(r_t, r_c),
        RewardMode::ClassifierOnly => r_t,
        RewardMode::ContentOnly => r_c,
    };
    RewardBreakdown {
        naturalness_prob,
        content_score,
        r_t,
        r_c,
        r,
    }
}

/// Reference-aware content quality score in [0, 1]. `C(x, y, y) = 1` must
/// hold for any implementation used as a reward.
pub trait ContentScorer<S: Scalar>: Send + Sync {
    fn score(&self, source: &Sentence, reference: &Sentence, hypothesis: &Sentence) -> S;
}

/// Character n-gram F-score (orders 1..=max_order, balanced F) between the
/// hypothesis and the reference, over the concatenated token characters.
/// The source sentence is unused. Stands in for a neural quality metric.
#[derive(Debug, Clone)]
pub struct CharNgramF {
    pub max_order: usize,
}

impl Default for CharNgramF {
    fn default() -> Self {
        CharNgramF { max_order: 6 }
    }
}

fn sentence_chars(s: &Sentence) -> Vec<char> {
    s.tokens
        .iter()
        .flat_map(|t| t.as_str().chars())
        .collect()
}

fn ngram_counts(chars: &[char], n: usize) -> HashMap<&[char], usize> {
    let mut counts = HashMap::new();
    if n > 0 && chars.len() >= n {
        for w in chars.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

impl CharNgramF {
    pub fn score_chars(&self, reference: &[char], hypothesis: &[char]) -> f64 {
        let mut precisions = Vec::new();
        let mut recalls = Vec::new();
        for n in 1..=self.max_order {
            let h = ngram_counts(hypothesis, n);
            let r = ngram_counts(reference, n);
            let h_total: usize = h.values().sum();
            let r_total: usize = r.values().sum();
            if h_total == 0 && r_total == 0 {
                // order uninformative for both sides
                continue;
            }
            let overlap: usize = h
                .iter()
                .map(|(gram, &c)| c.min(r.get(gram).copied().unwrap_or(0)))
                .sum();
            precisions.push(if h_total == 0 {
                0.0
            } else {
                overlap as f64 / h_total as f64
            });
            recalls.push(if r_total == 0 {
                0.0
            } else {
                overlap as f64 / r_total as f64
            });
        }
        if precisions.is_empty() {
            return 0.0;
        }
        let p = precisions.iter().sum::<f64>() / precisions.len() as f64;
        let r = recalls.iter().sum::<f64>() / recalls.len() as f64;
        if p + r == 0.0 {
            0.0
        } else {
            (2.0 * p * r / (p + r)).clamp(0.0, 1.0)
        }
    }
}

impl<S: Scalar> ContentScorer<S> for CharNgramF {
    fn score(&self, _source: &Sentence, reference: &Sentence, hypothesis: &Sentence) -> S {
        S::from_f64(self.score_chars(&sentence_chars(reference), &sentence_chars(hypothesis)))
    }
}

/// Nearest-rank percentile of a score sample (used to recalibrate σ_c to the
/// base model's score distribution).
pub fn percentile(scores: &[f64], pct: f64) -> f64 {
    assert!(!scores.is_empty(), "percentile of empty sample");
    assert!((0.0..=100.0).contains(&pct));
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}
