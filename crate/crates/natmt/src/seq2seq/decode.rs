//! Beam search and ancestral sampling over a stepwise next-token scorer.

use rand::Rng;

use crate::scalar::Scalar;

/// Anything that scores the next target token given the decoder prefix.
/// Prefixes always start with the BOS id.
pub trait NextTokenScorer<S: Scalar> {
    fn vocab_size(&self) -> usize;
    fn bos_id(&self) -> usize;
    fn eos_id(&self) -> usize;
    /// Maximum total decoder length (prefix including BOS).
    fn max_len(&self) -> usize;
    /// Ids that must never be generated (padding, tags, ...). EOS must not
    /// be listed here.
    fn forbidden_ids(&self) -> Vec<usize> {
        Vec::new()
    }
    /// Log-probabilities of the next token, normalized over the vocabulary.
    fn next_log_probs(&self, prefix: &[usize]) -> Vec<S>;
}

/// A completed (or forcibly truncated) beam hypothesis.
#[derive(Debug, Clone)]
pub struct BeamHypothesis<S> {
    /// Generated token ids, without BOS and without the final EOS.
    pub ids: Vec<usize>,
    /// Total model log-probability of the generated tokens (EOS included
    /// when one was produced).
    pub log_prob: S,
    /// `log_prob` divided by the number of generated tokens.
    pub normalized_score: S,
    /// True when no EOS was produced within the length budget.
    pub truncated: bool,
}

/// Length-normalized beam search. Every completed hypothesis encountered is
/// kept; the live frontier is pruned to `beam` entries per step. With
/// `beam == 1` this is greedy decoding.
pub fn beam_search<S: Scalar>(scorer: &impl NextTokenScorer<S>, beam: usize) -> BeamHypothesis<S> {
    assert!(beam >= 1, "beam size must be >= 1");
    let eos = scorer.eos_id();
    let forbidden = scorer.forbidden_ids();
    let max_len = scorer.max_len();

    // live hypotheses: (prefix incl. BOS, total log-prob)
    let mut live: Vec<(Vec<usize>, S)> = vec![(vec![scorer.bos_id()], S::zero())];
    let mut completed: Vec<BeamHypothesis<S>> = Vec::new();
    let mut truncated_best: Option<BeamHypothesis<S>> = None;

    while !live.is_empty() {
        let mut expansions: Vec<(Vec<usize>, S)> = Vec::new();
        for (prefix, lp) in &live {
            let step = scorer.next_log_probs(prefix);
            for (tok, &tlp) in step.iter().enumerate() {
                if forbidden.contains(&tok) || tlp.is_infinite() || tlp.is_nan() {
                    continue;
                }
                let total = *lp + tlp;
                if tok == eos {
                    let gen_len = prefix.len(); // generated tokens incl. EOS
                    completed.push(BeamHypothesis {
                        ids: prefix[1..].to_vec(),
                        log_prob: total,
                        normalized_score: total / S::from_f64(gen_len as f64),
                        truncated: false,
                    });
                } else if prefix.len() < max_len {
                    let mut next = prefix.clone();
                    next.push(tok);
                    expansions.push((next, total));
                }
            }
            if prefix.len() == max_len {
                // length budget exhausted without EOS; remember as fallback
                let gen_len = (prefix.len() - 1).max(1);
                let cand = BeamHypothesis {
                    ids: prefix[1..].to_vec(),
                    log_prob: *lp,
                    normalized_score: *lp / S::from_f64(gen_len as f64),
                    truncated: true,
                };
                if truncated_best
                    .as_ref()
                    .map_or(true, |b| cand.normalized_score > b.normalized_score)
                {
                    truncated_best = Some(cand);
                }
            }
        }
        sort_hyps(&mut expansions);
        expansions.truncate(beam);
        live = expansions;
    }

    completed
        .into_iter()
        .max_by(|a, b| {
            a.normalized_score
                .partial_cmp(&b.normalized_score)
                .expect("finite scores")
                .then_with(|| b.ids.cmp(&a.ids))
        })
        .or(truncated_best)
        .expect("beam search always yields a hypothesis")
}

fn sort_hyps<S: Scalar>(hyps: &mut [(Vec<usize>, S)]) {
    hyps.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite log-probs")
            .then_with(|| a.0.cmp(&b.0))
    });
}

/// An ancestral sample and the untempered model log-probs of its tokens.
#[derive(Debug, Clone)]
pub struct SampledSequence<S> {
    /// Generated ids without BOS/EOS.
    pub ids: Vec<usize>,
    /// One entry per generated token (EOS included when produced).
    pub token_log_probs: Vec<S>,
    pub truncated: bool,
}

impl<S: Scalar> SampledSequence<S> {
    pub fn total_log_prob(&self) -> S {
        self.token_log_probs.iter().copied().sum()
    }
}

/// Samples token-by-token from the scorer's distribution at `temperature`.
/// A temperature below 1e-6 degenerates to argmax. `top_k` restricts each
/// step to the k most probable tokens before renormalization.
///
/// The recorded log-probs are always the model's own (untempered, unfiltered)
/// values for the chosen tokens.
pub fn sample_sequence<S: Scalar>(
    scorer: &impl NextTokenScorer<S>,
    temperature: f64,
    top_k: Option<usize>,
    rng: &mut impl Rng,
) -> SampledSequence<S> {
    assert!(temperature >= 0.0, "temperature must be non-negative");
    let eos = scorer.eos_id();
    let forbidden = scorer.forbidden_ids();
    let mut prefix = vec![scorer.bos_id()];
    let mut log_probs = Vec::new();

    loop {
        let step = scorer.next_log_probs(&prefix);
        let chosen = choose_token(&step, &forbidden, temperature, top_k, rng);
        log_probs.push(step[chosen]);
        if chosen == eos {
            return SampledSequence {
                ids: prefix[1..].to_vec(),
                token_log_probs: log_probs,
                truncated: false,
            };
        }
        prefix.push(chosen);
        if prefix.len() >= scorer.max_len() {
            return SampledSequence {
                ids: prefix[1..].to_vec(),
                token_log_probs: log_probs,
                truncated: true,
            };
        }
    }
}

fn choose_token<S: Scalar>(
    log_probs: &[S],
    forbidden: &[usize],
    temperature: f64,
    top_k: Option<usize>,
    rng: &mut impl Rng,
) -> usize {
    let mut candidates: Vec<(usize, f64)> = log_probs
        .iter()
        .enumerate()
        .filter(|(i, _)| !forbidden.contains(i))
        .map(|(i, &lp)| (i, lp.as_f64()))
        .collect();
    // deterministic candidate order: best first, ties by id
    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    if let Some(k) = top_k {
        candidates.truncate(k.max(1));
    }
    if temperature < 1e-6 {
        return candidates[0].0;
    }
    let max = candidates[0].1;
    let weights: Vec<f64> = candidates
        .iter()
        .map(|&(_, lp)| ((lp - max) / temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut draw = rng.gen_range(0.0..1.0) * total;
    for (w, &(id, _)) in weights.iter().zip(&candidates) {
        draw -= w;
        if draw <= 0.0 {
            return id;
        }
    }
    candidates.last().unwrap().0
}

/// Total log-probability of a target id sequence (EOS appended) under the
/// scorer, computed stepwise.
pub fn sequence_log_prob_with<S: Scalar>(
    scorer: &impl NextTokenScorer<S>,
    target_ids: &[usize],
) -> S {
    let mut prefix = vec![scorer.bos_id()];
    let mut total = S::zero();
    for &id in target_ids.iter().chain(std::iter::once(&scorer.eos_id())) {
        let step = scorer.next_log_probs(&prefix);
        total = total + step[id];
        prefix.push(id);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Hand-built deterministic scorer: a small table of conditional
    /// distributions keyed by the last token of the prefix.
    /// Vocab: 0=BOS, 1=EOS, 2="a", 3="b".
    struct ToyScorer {
        max_len: usize,
    }

    impl ToyScorer {
        fn probs_after(last: usize) -> [f64; 4] {
            match last {
                0 => [0.0, 0.1, 0.6, 0.3],  // after BOS
                2 => [0.0, 0.5, 0.1, 0.4],  // after "a"
                3 => [0.0, 0.3, 0.45, 0.25], // after "b"
                _ => [0.0, 1.0, 0.0, 0.0],
            }
        }
    }

    impl NextTokenScorer<f64> for ToyScorer {
        fn vocab_size(&self) -> usize {
            4
        }
        fn bos_id(&self) -> usize {
            0
        }
        fn eos_id(&self) -> usize {
            1
        }
        fn max_len(&self) -> usize {
            self.max_len
        }
        fn forbidden_ids(&self) -> Vec<usize> {
            vec![0]
        }
        fn next_log_probs(&self, prefix: &[usize]) -> Vec<f64> {
            Self::probs_after(*prefix.last().unwrap())
                .iter()
                .map(|p| if *p == 0.0 { f64::NEG_INFINITY } else { p.ln() })
                .collect()
        }
    }

    /// Brute-force oracle: enumerate every EOS-terminated sequence of
    /// generated length <= limit and return the best normalized score.
    fn enumerate_best(scorer: &ToyScorer, limit: usize) -> (Vec<usize>, f64) {
        let mut best: Option<(Vec<usize>, f64)> = None;
        let mut stack: Vec<(Vec<usize>, f64)> = vec![(vec![0], 0.0)];
        while let Some((prefix, lp)) = stack.pop() {
            let step = scorer.next_log_probs(&prefix);
            for tok in 1..4 {
                let tlp = step[tok];
                if tlp.is_infinite() {
                    continue;
                }
                if tok == 1 {
                    let score = (lp + tlp) / prefix.len() as f64;
                    let ids = prefix[1..].to_vec();
                    if best.as_ref().map_or(true, |(_, b)| score > *b) {
                        best = Some((ids, score));
                    }
                } else if prefix.len() < limit {
                    let mut next = prefix.clone();
                    next.push(tok);
                    stack.push((next, lp + tlp));
                }
            }
        }
        best.unwrap()
    }

    #[test]
    fn beam_matches_exhaustive_enumeration() {
        let scorer = ToyScorer { max_len: 5 }; // generated length <= 4
        let (oracle_ids, oracle_score) = enumerate_best(&scorer, 5);
        let hyp = beam_search(&scorer, 8);
        assert_eq!(hyp.ids, oracle_ids);
        assert!((hyp.normalized_score - oracle_score).abs() < 1e-12);
        assert!(!hyp.truncated);
    }

    #[test]
    fn beam_one_is_greedy() {
        let scorer = ToyScorer { max_len: 6 };
        let hyp = beam_search(&scorer, 1);
        // greedy path: BOS -> a (0.6) -> EOS (0.5)
        assert_eq!(hyp.ids, vec![2]);
        assert!((hyp.log_prob - (0.6f64.ln() + 0.5f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn wider_beam_never_scores_worse() {
        let scorer = ToyScorer { max_len: 6 };
        let narrow = beam_search(&scorer, 1);
        let wide = beam_search(&scorer, 5);
        assert!(wide.normalized_score >= narrow.normalized_score - 1e-12);
    }

    #[test]
    fn truncation_is_flagged_when_eos_unreachable() {
        struct NoEos;
        impl NextTokenScorer<f64> for NoEos {
            fn vocab_size(&self) -> usize {
                3
            }
            fn bos_id(&self) -> usize {
                0
            }
            fn eos_id(&self) -> usize {
                1
            }
            fn max_len(&self) -> usize {
                4
            }
            fn next_log_probs(&self, _prefix: &[usize]) -> Vec<f64> {
                vec![f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0]
            }
        }
        let hyp = beam_search(&NoEos, 2);
        assert!(hyp.truncated);
        assert_eq!(hyp.ids, vec![2, 2, 2]);
    }

    #[test]
    fn sampled_frequencies_match_distribution() {
        // fixed 3-token distribution (0.5, 0.3, 0.2) exposed as the
        // first-step distribution (EOS follows immediately)
        struct Fixed;
        impl NextTokenScorer<f64> for Fixed {
            fn vocab_size(&self) -> usize {
                5
            }
            fn bos_id(&self) -> usize {
                0
            }
            fn eos_id(&self) -> usize {
                1
            }
            fn max_len(&self) -> usize {
                3
            }
            fn next_log_probs(&self, prefix: &[usize]) -> Vec<f64> {
                if prefix.len() == 1 {
                    vec![
                        f64::NEG_INFINITY,
                        f64::NEG_INFINITY,
                        0.5f64.ln(),
                        0.3f64.ln(),
                        0.2f64.ln(),
                    ]
                } else {
                    vec![f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY]
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 5];
        let n = 10_000;
        for _ in 0..n {
            let s = sample_sequence(&Fixed, 1.0, None, &mut rng);
            counts[s.ids[0]] += 1;
        }
        let freq = |i: usize| counts[i] as f64 / n as f64;
        assert!((freq(2) - 0.5).abs() < 0.02, "freq(2)={}", freq(2));
        assert!((freq(3) - 0.3).abs() < 0.02, "freq(3)={}", freq(3));
        assert!((freq(4) - 0.2).abs() < 0.02, "freq(4)={}", freq(4));
    }

    #[test]
    fn zero_temperature_is_argmax() {
        let scorer = ToyScorer { max_len: 6 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_sequence(&scorer, 0.0, None, &mut rng);
        let greedy = beam_search(&scorer, 1);
        assert_eq!(s.ids, greedy.ids);
    }

    #[test]
    fn sampled_log_probs_sum_to_sequence_log_prob() {
        let scorer = ToyScorer { max_len: 8 };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let s = sample_sequence(&scorer, 1.0, None, &mut rng);
            if s.truncated {
                continue;
            }
            let direct = sequence_log_prob_with(&scorer, &s.ids);
            assert!((s.total_log_prob() - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn one_hot_scorer_scores_its_own_output_at_zero() {
        // deterministic one-hot model: p = 1 on the greedy path
        struct OneHot;
        impl NextTokenScorer<f64> for OneHot {
            fn vocab_size(&self) -> usize {
                3
            }
            fn bos_id(&self) -> usize {
                0
            }
            fn eos_id(&self) -> usize {
                1
            }
            fn max_len(&self) -> usize {
                5
            }
            fn next_log_probs(&self, prefix: &[usize]) -> Vec<f64> {
                if prefix.len() < 3 {
                    vec![f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0]
                } else {
                    vec![f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY]
                }
            }
        }
        let greedy = beam_search(&OneHot, 1);
        let lp = sequence_log_prob_with(&OneHot, &greedy.ids);
        assert_eq!(lp, 0.0);
    }

    #[test]
    fn uniform_scorer_gives_log_v_per_token() {
        struct Uniform;
        impl NextTokenScorer<f64> for Uniform {
            fn vocab_size(&self) -> usize {
                4
            }
            fn bos_id(&self) -> usize {
                0
            }
            fn eos_id(&self) -> usize {
                1
            }
            fn max_len(&self) -> usize {
                8
            }
            fn next_log_probs(&self, _prefix: &[usize]) -> Vec<f64> {
                vec![(1.0f64 / 4.0).ln(); 4]
            }
        }
        // length-3 target: total log-prob = 3 * log(1/4)
        let lp = sequence_log_prob_with(&Uniform, &[2, 3]);
        assert!((lp - 3.0 * (0.25f64).ln()).abs() < 1e-12);
    }
}
