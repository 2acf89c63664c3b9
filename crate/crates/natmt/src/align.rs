//! Reward-driven alignment of a trained translation model: sample
//! translations, score them for naturalness and content, and update the
//! policy with the mixed reward/NLL objective. Also hosts the top-k
//! reranking baseline and checkpoint selection.

use rand::Rng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::classifier::NaturalnessClassifier;
use crate::corpus::{ParallelPair, Sentence, BOS_ID, EOS_ID};
use crate::graph::GradStore;
use crate::metrics::{mtld, MTLD_THRESHOLD};
use crate::reward::{overall_reward, reward_breakdown, ContentScorer, RewardConfig, RewardMode};
use crate::scalar::Scalar;
use crate::seq2seq::{beam_search, sample_sequence, AdamW, Checkpoint, ModelError, Seq2SeqModel};

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("base model has not been trained")]
    UntrainedBase,
    #[error("alignment requires a non-empty pair set")]
    EmptyPairs,
    #[error("invalid align config: {0}")]
    BadConfig(String),
    #[error("no checkpoints to select from")]
    NoCheckpoints,
    #[error("no checkpoint at step {0}")]
    NoSuchStep(u64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub struct AlignConfig<S> {
    pub reward: RewardConfig<S>,
    pub mode: RewardMode,
    pub samples_per_source: usize,
    pub temperature: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub checkpoint_interval: u64,
    pub max_steps: u64,
    /// Global gradient-norm clip; non-positive disables.
    pub clip_norm: f64,
    /// Optional moving-average reward baseline (variance reduction),
    /// off by default to stay with the plain policy gradient.
    pub use_baseline: bool,
    pub baseline_decay: f64,
    /// Beam size for periodic validation decoding.
    pub eval_beam: usize,
    pub seed: u64,
}

impl<S: Scalar> Default for AlignConfig<S> {
    fn default() -> Self {
        AlignConfig {
            reward: RewardConfig::default(),
            mode: RewardMode::Both,
            samples_per_source: 1,
            temperature: 1.0,
            learning_rate: 1e-4,
            weight_decay: 0.0,
            batch_size: 8,
            checkpoint_interval: 100,
            max_steps: 1000,
            clip_norm: 1.0,
            use_baseline: false,
            baseline_decay: 0.9,
            eval_beam: 5,
            seed: 0,
        }
    }
}

impl<S: Scalar> AlignConfig<S> {
    pub fn validate(&self) -> Result<(), AlignError> {
        self.reward.validate().map_err(AlignError::BadConfig)?;
        if self.samples_per_source == 0 {
            return Err(AlignError::BadConfig("samples_per_source must be positive".into()));
        }
        if self.temperature <= 0.0 {
            return Err(AlignError::BadConfig("temperature must be positive".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(AlignError::BadConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.max_steps == 0 || self.checkpoint_interval == 0 {
            return Err(AlignError::BadConfig(
                "batch_size, max_steps and checkpoint_interval must be positive".into(),
            ));
        }
        if self.eval_beam == 0 {
            return Err(AlignError::BadConfig("eval_beam must be positive".into()));
        }
        Ok(())
    }
}

/// Per-step log row. `combined` always equals `beta * nll_term +
/// reward_term` (both logged in f64).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignStepLog {
    pub step: u64,
    pub mean_r_t: f64,
    pub mean_r_c: f64,
    pub mean_r: f64,
    pub nll_term: f64,
    pub reward_term: f64,
    pub combined: f64,
}

/// Validation snapshot taken at every checkpoint (step 0 is the base model).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignEvalPoint {
    pub step: u64,
    /// Fraction of decoded outputs the classifier assigns to the preferred
    /// class, in [0, 1].
    pub class_rate: f64,
    pub mean_content: f64,
    pub mtld: f64,
    /// Harmonic mean of `class_rate` and `mean_content`; zero if either is.
    pub hm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignStatus {
    Completed,
    /// Loss went non-finite; training stopped at this step. The checkpoint
    /// list still ends with the last finite snapshot.
    Aborted { at_step: u64 },
}

#[derive(Debug)]
pub struct AlignOutcome<S: Scalar> {
    pub checkpoints: Vec<Checkpoint<S>>,
    pub logs: Vec<AlignStepLog>,
    pub evals: Vec<AlignEvalPoint>,
    pub status: AlignStatus,
}

/// Aggregates of one alignment minibatch.
#[derive(Debug, Clone, Copy)]
pub struct BatchStats {
    pub mean_r_t: f64,
    pub mean_r_c: f64,
    pub mean_r: f64,
    pub nll_term: f64,
    pub reward_term: f64,
}

impl BatchStats {
    pub fn combined<S: Scalar>(&self, beta: S) -> f64 {
        beta.as_f64() * self.nll_term + self.reward_term
    }
}

/// One minibatch of the alignment objective: samples a translation per
/// source, scores rewards, and accumulates the gradient of
/// `beta * nll(x, y) + r(ŷ) * nll(x, ŷ)` (batch-mean) into `grads`.
pub fn alignment_batch_grad<S: Scalar>(
    model: &Seq2SeqModel<S>,
    batch: &[ParallelPair],
    clf: &NaturalnessClassifier<S>,
    scorer: &dyn ContentScorer<S>,
    cfg: &AlignConfig<S>,
    baseline: Option<f64>,
    rng: &mut impl Rng,
    grads: &mut GradStore<S>,
) -> Result<BatchStats, AlignError> {
    let n_pairs = batch.len();
    let k = cfg.samples_per_source;
    let mut sum_r_t = 0.0;
    let mut sum_r_c = 0.0;
    let mut sum_r = 0.0;
    let mut nll_term = 0.0;
    let mut reward_term = 0.0;

    for pair in batch {
        let src = model.encode_source(&pair.source, None)?;
        for _ in 0..k {
            let step_scorer = model.scorer_for(&pair.source, None)?;
            let sample = sample_sequence(&step_scorer, cfg.temperature, None, rng);
            let hyp = model.ids_to_sentence(&sample.ids);
            let p_nat = clf.score_naturalness(&hyp);
            let content = scorer.score(&pair.source, &pair.target, &hyp);
            let b = reward_breakdown(p_nat, content, &cfg.reward, cfg.mode);
            sum_r_t += b.r_t.as_f64();
            sum_r_c += b.r_c.as_f64();
            sum_r += b.r.as_f64();

            let advantage = b.r.as_f64() - baseline.unwrap_or(0.0);
            let (tgt_in, tgt_out) = sampled_target_ids(&sample.ids, sample.truncated);
            if advantage != 0.0 {
                let weight = S::from_f64(advantage / (n_pairs * k) as f64);
                let loss = model.nll_backward(&src, &tgt_in, &tgt_out, weight, grads)?;
                reward_term += b.r.as_f64() * loss.as_f64() / (n_pairs * k) as f64;
            } else if b.r.as_f64() != 0.0 {
                // advantage zero but reward nonzero: loss still contributes
                // to the logged objective
                let loss = model.nll_loss_ids(&src, &tgt_in, &tgt_out)?;
                reward_term += b.r.as_f64() * loss.as_f64() / (n_pairs * k) as f64;
            }
        }
        let (ref_in, ref_out) = model.encode_target(&pair.target)?;
        if cfg.reward.beta > S::zero() {
            let weight = cfg.reward.beta / S::from_f64(n_pairs as f64);
            let loss = model.nll_backward(&src, &ref_in, &ref_out, weight, grads)?;
            nll_term += loss.as_f64() / n_pairs as f64;
        } else {
            let loss = model.nll_loss_ids(&src, &ref_in, &ref_out)?;
            nll_term += loss.as_f64() / n_pairs as f64;
        }
    }

    let n_samples = (n_pairs * k) as f64;
    Ok(BatchStats {
        mean_r_t: sum_r_t / n_samples,
        mean_r_c: sum_r_c / n_samples,
        mean_r: sum_r / n_samples,
        nll_term,
        reward_term,
    })
}

/// Decoder input/target ids for a sampled sequence; EOS is a real target
/// only when the sample actually produced one.
fn sampled_target_ids(ids: &[usize], truncated: bool) -> (Vec<usize>, Vec<usize>) {
    let mut tgt_in = Vec::with_capacity(ids.len() + 1);
    tgt_in.push(BOS_ID);
    if truncated {
        tgt_in.extend(&ids[..ids.len().saturating_sub(1)]);
        (tgt_in, ids.to_vec())
    } else {
        tgt_in.extend(ids);
        let mut tgt_out = ids.to_vec();
        tgt_out.push(EOS_ID);
        (tgt_in, tgt_out)
    }
}

/// Decodes the validation pairs and summarizes classifier rate, content
/// score, lexical diversity, and their harmonic mean.
pub fn evaluate_alignment<S: Scalar>(
    model: &Seq2SeqModel<S>,
    valid: &[ParallelPair],
    clf: &NaturalnessClassifier<S>,
    scorer: &dyn ContentScorer<S>,
    beam: usize,
    step: u64,
) -> Result<AlignEvalPoint, AlignError> {
    let mut preferred = 0usize;
    let mut content_sum = 0.0;
    let mut all_tokens = Vec::new();
    for pair in valid {
        let dec = model.scorer_for(&pair.source, None)?;
        let hyp_ids = beam_search(&dec, beam).ids;
        let hyp = model.ids_to_sentence(&hyp_ids);
        if clf.predict(&hyp) {
            preferred += 1;
        }
        content_sum += scorer.score(&pair.source, &pair.target, &hyp).as_f64();
        all_tokens.extend(hyp.tokens);
    }
    let class_rate = preferred as f64 / valid.len() as f64;
    let mean_content = content_sum / valid.len() as f64;
    let diversity = mtld(&all_tokens, MTLD_THRESHOLD).unwrap_or(0.0);
    let hm = overall_reward(class_rate, mean_content);
    Ok(AlignEvalPoint {
        step,
        class_rate,
        mean_content,
        mtld: diversity,
        hm,
    })
}

/// Multi-perspective alignment: per minibatch, sample a translation per
/// source, compute the thresholded rewards and their combination, and take a
/// gradient step on `beta * L_nll + L_reward`. Checkpoints (and validation
/// evaluations when `valid` is non-empty) are taken every
/// `checkpoint_interval` steps; the base model is checkpoint 0.
pub fn align_train<S: Scalar>(
    base: &Seq2SeqModel<S>,
    pairs: &[ParallelPair],
    valid: &[ParallelPair],
    clf: &NaturalnessClassifier<S>,
    scorer: &dyn ContentScorer<S>,
    cfg: &AlignConfig<S>,
) -> Result<AlignOutcome<S>, AlignError> {
    cfg.validate()?;
    if base.steps_trained() == 0 {
        return Err(AlignError::UntrainedBase);
    }
    if pairs.is_empty() {
        return Err(AlignError::EmptyPairs);
    }
    base.check_finite()?;

    let mut model = base.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0usize;

    let mut grads = GradStore::zeros_like(model.params());
    let mut opt = AdamW::new(model.params());
    let mut logs = Vec::new();
    let mut evals = Vec::new();
    let mut checkpoints = vec![Checkpoint {
        model: base.clone(),
        step: 0,
        val_loss: f64::NAN,
    }];
    if !valid.is_empty() {
        evals.push(evaluate_alignment(base, valid, clf, scorer, cfg.eval_beam, 0)?);
    }

    let steps_per_epoch = pairs.len().div_ceil(cfg.batch_size).max(1) as u64;
    let mut epoch_reward_sum = 0.0;
    let mut baseline_value = 0.0;
    let mut baseline_ready = false;
    let mut status = AlignStatus::Completed;

    for step in 1..=cfg.max_steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(pairs[order[cursor]].clone());
            cursor += 1;
        }
        let baseline = (cfg.use_baseline && baseline_ready).then_some(baseline_value);
        let stats = alignment_batch_grad(
            &model, &batch, clf, scorer, cfg, baseline, &mut rng, &mut grads,
        )?;
        let combined = stats.combined(cfg.reward.beta);
        logs.push(AlignStepLog {
            step,
            mean_r_t: stats.mean_r_t,
            mean_r_c: stats.mean_r_c,
            mean_r: stats.mean_r,
            nll_term: stats.nll_term,
            reward_term: stats.reward_term,
            combined,
        });
        if !combined.is_finite() {
            status = AlignStatus::Aborted { at_step: step };
            break;
        }

        if cfg.clip_norm > 0.0 {
            let norm = grads.global_norm().as_f64();
            if norm > cfg.clip_norm {
                grads.scale(S::from_f64(cfg.clip_norm / norm));
            }
        }
        opt.step(model.params_mut(), &grads, cfg.learning_rate, cfg.weight_decay);
        grads.reset();
        if model.check_finite().is_err() {
            status = AlignStatus::Aborted { at_step: step };
            break;
        }

        if cfg.use_baseline {
            baseline_value = if baseline_ready {
                cfg.baseline_decay * baseline_value + (1.0 - cfg.baseline_decay) * stats.mean_r
            } else {
                stats.mean_r
            };
            baseline_ready = true;
        }

        epoch_reward_sum += stats.mean_r;
        if step % steps_per_epoch == 0 {
            if epoch_reward_sum == 0.0 {
                log::warn!("alignment reward collapsed to zero for a full epoch at step {step}");
            }
            epoch_reward_sum = 0.0;
        }

        if step % cfg.checkpoint_interval == 0 || step == cfg.max_steps {
            let mut snapshot = model.clone();
            snapshot.set_steps_trained(base.steps_trained() + step);
            checkpoints.push(Checkpoint {
                model: snapshot,
                step,
                val_loss: f64::NAN,
            });
            if !valid.is_empty() {
                evals.push(evaluate_alignment(
                    &model, valid, clf, scorer, cfg.eval_beam, step,
                )?);
            }
        }
    }

    Ok(AlignOutcome {
        checkpoints,
        logs,
        evals,
        status,
    })
}

/// How to pick the final model from an alignment run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionCriterion {
    /// The checkpoint taken at exactly this step.
    FixedStep(u64),
    /// The checkpoint with the best harmonic mean of validation
    /// classification rate and content score.
    MaxHarmonicMean,
}

pub fn select_checkpoint<'c, S: Scalar>(
    checkpoints: &'c [Checkpoint<S>],
    evals: &[AlignEvalPoint],
    criterion: SelectionCriterion,
) -> Result<&'c Checkpoint<S>, AlignError> {
    if checkpoints.is_empty() {
        return Err(AlignError::NoCheckpoints);
    }
    if checkpoints.len() == 1 {
        return Ok(&checkpoints[0]);
    }
    match criterion {
        SelectionCriterion::FixedStep(step) => checkpoints
            .iter()
            .find(|c| c.step == step)
            .ok_or(AlignError::NoSuchStep(step)),
        SelectionCriterion::MaxHarmonicMean => {
            let best = evals
                .iter()
                .max_by(|a, b| {
                    a.hm.partial_cmp(&b.hm)
                        .expect("finite harmonic means")
                        .then_with(|| b.step.cmp(&a.step))
                })
                .ok_or(AlignError::NoCheckpoints)?;
            checkpoints
                .iter()
                .find(|c| c.step == best.step)
                .ok_or(AlignError::NoSuchStep(best.step))
        }
    }
}

/// One reranked translation: the top-k-sampled candidate the classifier
/// scores highest, ties broken by model log-probability.
#[derive(Debug, Clone)]
pub struct RerankedTranslation<S> {
    pub sentence: Sentence,
    pub classifier_score: S,
    pub log_prob: S,
}

pub fn rerank_topk<S: Scalar>(
    model: &Seq2SeqModel<S>,
    x: &Sentence,
    k: usize,
    clf: &NaturalnessClassifier<S>,
    top_k_filter: usize,
    temperature: f64,
    rng: &mut impl Rng,
) -> Result<RerankedTranslation<S>, AlignError> {
    assert!(k >= 1, "candidate count must be >= 1");
    let scorer = model.scorer_for(x, None)?;
    let mut best: Option<RerankedTranslation<S>> = None;
    for _ in 0..k {
        let sample = sample_sequence(&scorer, temperature, Some(top_k_filter), rng);
        let sentence = model.ids_to_sentence(&sample.ids);
        let cand = RerankedTranslation {
            classifier_score: clf.score_naturalness(&sentence),
            log_prob: sample.total_log_prob(),
            sentence,
        };
        let better = match &best {
            None => true,
            Some(b) => {
                cand.classifier_score > b.classifier_score
                    || (cand.classifier_score == b.classifier_score && cand.log_prob > b.log_prob)
            }
        };
        if better {
            best = Some(cand);
        }
    }
    Ok(best.expect("k >= 1"))
}

/// 60th-percentile content score of the model's beam output on a pair set,
/// the per-corpus recalibration target for σ_c.
pub fn calibrate_sigma_c<S: Scalar>(
    model: &Seq2SeqModel<S>,
    pairs: &[ParallelPair],
    scorer: &dyn ContentScorer<S>,
    beam: usize,
) -> Result<S, AlignError> {
    if pairs.is_empty() {
        return Err(AlignError::EmptyPairs);
    }
    let mut scores = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let dec = model.scorer_for(&pair.source, None)?;
        let hyp = model.ids_to_sentence(&beam_search(&dec, beam).ids);
        scores.push(scorer.score(&pair.source, &pair.target, &hyp).as_f64());
    }
    Ok(S::from_f64(crate::reward::percentile(&scores, 60.0)))
}
