//! Supervised training: AdamW with warmup + cosine decay, periodic
//! validation, early stopping, and the tag-prefixed baseline variant.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Checkpoint, ModelError, Seq2SeqModel};
use crate::corpus::{ParallelPair, Sentence, Token};
use crate::graph::{GradStore, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub max_lr: f64,
    pub warmup_steps: u64,
    pub max_steps: u64,
    /// Sentences per micro-batch.
    pub batch_size: usize,
    /// Micro-batches accumulated per optimizer step.
    pub grad_accum: usize,
    pub eval_interval: u64,
    pub patience: u32,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_lr: 1e-4,
            warmup_steps: 100,
            max_steps: 5000,
            batch_size: 32,
            grad_accum: 2,
            eval_interval: 200,
            patience: 3,
            weight_decay: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.max_lr <= 0.0 {
            return Err(ModelError::BadConfig("max_lr must be positive".into()));
        }
        let positive = [
            ("warmup_steps", self.warmup_steps),
            ("max_steps", self.max_steps),
            ("batch_size", self.batch_size as u64),
            ("grad_accum", self.grad_accum as u64),
            ("eval_interval", self.eval_interval),
            ("patience", u64::from(self.patience)),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::BadConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Linear warmup to `max_lr`, then cosine decay to zero at `max_steps`.
pub fn lr_at_step(step: u64, cfg: &TrainConfig) -> f64 {
    if step <= cfg.warmup_steps {
        return cfg.max_lr * step as f64 / cfg.warmup_steps as f64;
    }
    let span = cfg.max_steps.saturating_sub(cfg.warmup_steps).max(1) as f64;
    let progress = ((step - cfg.warmup_steps) as f64 / span).min(1.0);
    cfg.max_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Adam with decoupled weight decay.
pub struct AdamW<S: Scalar> {
    m: Vec<Matrix<S>>,
    v: Vec<Matrix<S>>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl<S: Scalar> AdamW<S> {
    pub fn new(params: &ParamStore<S>) -> Self {
        let zeros: Vec<Matrix<S>> = params
            .iter()
            .map(|(_, _, t)| Matrix::zeros(t.rows(), t.cols()))
            .collect();
        AdamW {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(
        &mut self,
        params: &mut ParamStore<S>,
        grads: &GradStore<S>,
        lr: f64,
        weight_decay: f64,
    ) {
        self.t += 1;
        let b1 = S::from_f64(self.beta1);
        let b2 = S::from_f64(self.beta2);
        let one = S::one();
        let bc1 = S::from_f64(1.0 - self.beta1.powi(self.t as i32));
        let bc2 = S::from_f64(1.0 - self.beta2.powi(self.t as i32));
        let lr_s = S::from_f64(lr);
        let wd = S::from_f64(weight_decay);
        let eps = S::from_f64(self.eps);
        for (i, id) in params.param_ids().into_iter().enumerate() {
            let g = grads.get(id);
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for ((mv, vv), &gv) in m.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
            }
            let p = params.get_mut(id);
            for ((pv, &mv), &vv) in p.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
                let mhat = mv / bc1;
                let vhat = vv / bc2;
                *pv = *pv - lr_s * (mhat / (vhat.sqrt() + eps) + wd * *pv);
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

/// Stops after `patience` consecutive evaluations without strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: u32,
    best: f64,
    bad: u32,
    evals: usize,
    best_eval: usize,
}

impl EarlyStopper {
    pub fn new(patience: u32) -> Self {
        assert!(patience >= 1);
        EarlyStopper {
            patience,
            best: f64::INFINITY,
            bad: 0,
            evals: 0,
            best_eval: 0,
        }
    }

    pub fn observe(&mut self, val_loss: f64) -> StopDecision {
        self.evals += 1;
        if val_loss < self.best {
            self.best = val_loss;
            self.best_eval = self.evals;
            self.bad = 0;
            StopDecision {
                improved: true,
                stop: false,
            }
        } else {
            self.bad += 1;
            StopDecision {
                improved: false,
                stop: self.bad >= self.patience,
            }
        }
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }

    /// 1-based index of the best evaluation so far.
    pub fn best_eval(&self) -> usize {
        self.best_eval
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub step: u64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainStatus {
    ReachedMaxSteps,
    EarlyStopped,
    Diverged,
}

#[derive(Debug)]
pub struct TrainOutcome<S: Scalar> {
    /// Snapshot at the best validation loss (the last finite state when
    /// training diverged before any evaluation improved).
    pub best: Checkpoint<S>,
    pub history: Vec<EvalPoint>,
    pub status: TrainStatus,
    pub final_step: u64,
}

struct EncodedPair {
    src: Vec<usize>,
    tgt_in: Vec<usize>,
    tgt_out: Vec<usize>,
}

fn encode_pairs<S: Scalar>(
    model: &Seq2SeqModel<S>,
    pairs: &[ParallelPair],
) -> Result<Vec<EncodedPair>, ModelError> {
    pairs
        .iter()
        .map(|p| {
            let src = model.encode_source(&p.source, None)?;
            let (tgt_in, tgt_out) = model.encode_target(&p.target)?;
            Ok(EncodedPair {
                src,
                tgt_in,
                tgt_out,
            })
        })
        .collect()
}

fn mean_val_loss<S: Scalar>(
    model: &Seq2SeqModel<S>,
    valid: &[EncodedPair],
) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for p in valid {
        total += model.nll_loss_ids(&p.src, &p.tgt_in, &p.tgt_out)?.as_f64();
    }
    Ok(total / valid.len() as f64)
}

/// Minimizes the per-token NLL over the training pairs, evaluating on the
/// validation pairs every `eval_interval` steps, and returns the checkpoint
/// with the best validation loss.
pub fn train_supervised<S: Scalar>(
    model: &mut Seq2SeqModel<S>,
    train: &[ParallelPair],
    valid: &[ParallelPair],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<S>, ModelError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(ModelError::EmptySet("training"));
    }
    if valid.is_empty() {
        return Err(ModelError::EmptySet("validation"));
    }
    let train_enc = encode_pairs(model, train)?;
    let valid_enc = encode_pairs(model, valid)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_enc.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0usize;

    let mut grads = GradStore::zeros_like(model.params());
    let mut opt = AdamW::new(model.params());
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut history = Vec::new();
    let mut best: Option<Checkpoint<S>> = None;
    let mut status = TrainStatus::ReachedMaxSteps;
    let mut final_step = 0;
    let mut loss_accum = 0.0;
    let mut loss_count = 0usize;

    let n_per_step = cfg.batch_size * cfg.grad_accum;
    let weight = S::from_f64(1.0 / n_per_step as f64);

    'steps: for step in 1..=cfg.max_steps {
        let mut batch_loss = 0.0;
        for _ in 0..n_per_step {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let p = &train_enc[order[cursor]];
            cursor += 1;
            match model.nll_backward(&p.src, &p.tgt_in, &p.tgt_out, weight, &mut grads) {
                Ok(loss) => batch_loss += loss.as_f64(),
                Err(ModelError::NonFiniteLoss) => {
                    status = TrainStatus::Diverged;
                    final_step = step;
                    break 'steps;
                }
                Err(e) => return Err(e),
            }
        }
        batch_loss /= n_per_step as f64;
        if !batch_loss.is_finite() {
            status = TrainStatus::Diverged;
            final_step = step;
            break;
        }
        loss_accum += batch_loss;
        loss_count += 1;

        opt.step(
            model.params_mut(),
            &grads,
            lr_at_step(step, cfg),
            cfg.weight_decay,
        );
        grads.reset();
        final_step = step;

        if step % cfg.eval_interval == 0 || step == cfg.max_steps {
            let val_loss = mean_val_loss(model, &valid_enc)?;
            history.push(EvalPoint {
                step,
                train_loss: loss_accum / loss_count.max(1) as f64,
                val_loss,
            });
            loss_accum = 0.0;
            loss_count = 0;
            let decision = stopper.observe(val_loss);
            if decision.improved {
                let mut snapshot = model.clone();
                snapshot.set_steps_trained(step);
                best = Some(Checkpoint {
                    model: snapshot,
                    step,
                    val_loss,
                });
            }
            if decision.stop {
                status = TrainStatus::EarlyStopped;
                break;
            }
        }
    }

    model.set_steps_trained(final_step);
    let best = match best {
        Some(b) => b,
        None => {
            // nothing ever improved (or training diverged first): fall back
            // to the current state if finite, otherwise it is unusable
            let val_loss = mean_val_loss(model, &valid_enc).unwrap_or(f64::INFINITY);
            Checkpoint {
                model: model.clone(),
                step: final_step,
                val_loss,
            }
        }
    };
    Ok(TrainOutcome {
        best,
        history,
        status,
        final_step,
    })
}

/// Mean-normalized supervised gradients over a batch (no parameter update);
/// returns the gradients and the mean per-token loss.
pub fn supervised_batch_grad<S: Scalar>(
    model: &Seq2SeqModel<S>,
    batch: &[ParallelPair],
) -> Result<(GradStore<S>, f64), ModelError> {
    assert!(!batch.is_empty());
    let mut grads = GradStore::zeros_like(model.params());
    let weight = S::from_f64(1.0 / batch.len() as f64);
    let mut total = 0.0;
    for p in batch {
        let src = model.encode_source(&p.source, None)?;
        let (tgt_in, tgt_out) = model.encode_target(&p.target)?;
        total += model
            .nll_backward(&src, &tgt_in, &tgt_out, weight, &mut grads)?
            .as_f64();
    }
    Ok((grads, total / batch.len() as f64))
}

fn tag_pairs(pairs: &[ParallelPair], tag: &str) -> Vec<ParallelPair> {
    pairs
        .iter()
        .map(|p| {
            let mut tokens = Vec::with_capacity(p.source.len() + 1);
            tokens.push(Token::new(tag));
            tokens.extend(p.source.tokens.iter().cloned());
            ParallelPair {
                source: Sentence::from_tokens(tokens),
                target: p.target.clone(),
                book_id: p.book_id.clone(),
            }
        })
        .collect()
}

/// Tagging baseline: `<tran>` prefixes the sources of target-translated
/// pairs, `<orig>` those of target-original pairs, and training runs on the
/// concatenation. `original_scale` caps the original pool at
/// `scale * |translated|` pairs (seeded down-sampling), mirroring corpus
/// ratio experiments. Validation pairs are tagged `<orig>`, the default
/// inference register.
pub fn train_tagged<S: Scalar>(
    model: &mut Seq2SeqModel<S>,
    pairs_translated: &[ParallelPair],
    pairs_original: &[ParallelPair],
    valid: &[ParallelPair],
    cfg: &TrainConfig,
    original_scale: f64,
) -> Result<TrainOutcome<S>, ModelError> {
    if pairs_translated.is_empty() {
        return Err(ModelError::EmptyPool("translated"));
    }
    if pairs_original.is_empty() {
        return Err(ModelError::EmptyPool("original"));
    }
    let mut original = tag_pairs(pairs_original, "<orig>");
    let keep = ((pairs_translated.len() as f64 * original_scale).round() as usize)
        .max(1)
        .min(original.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7461_6767);
    original.shuffle(&mut rng);
    original.truncate(keep);

    let mut train = tag_pairs(pairs_translated, "<tran>");
    train.extend(original);
    let valid = tag_pairs(valid, "<orig>");
    train_supervised(model, &train, &valid, cfg)
}
