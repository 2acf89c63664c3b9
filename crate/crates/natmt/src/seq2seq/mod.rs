//! Trainable encoder-decoder translation policy.

mod checkpoint;
mod decode;
mod train;

pub use checkpoint::{config_hash, Checkpoint, CheckpointError};
pub use decode::{
    beam_search, sample_sequence, sequence_log_prob_with, BeamHypothesis, NextTokenScorer,
    SampledSequence,
};
pub use train::{
    lr_at_step, supervised_batch_grad, train_supervised, train_tagged, AdamW, EarlyStopper,
    EvalPoint, TrainConfig, TrainOutcome, TrainStatus,
};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{Sentence, Vocabulary, BOS_ID, EOS_ID, TAG_ORIG_ID, TAG_TRAN_ID};
use crate::graph::{GradStore, NodeId, ParamId, ParamStore, Tape};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

const ATTN_MASK: f64 = -1e9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parameter {param} contains a non-finite value")]
    NonFinite { param: String },
    #[error("forward pass produced a non-finite loss with finite parameters")]
    NonFiniteLoss,
    #[error("sequence of length {len} exceeds model max length {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("target sentence is empty")]
    EmptyTarget,
    #[error("source sentence is empty")]
    EmptySource,
    #[error("{0} training pool is empty")]
    EmptyPool(&'static str),
    #[error("training requires a non-empty {0} set")]
    EmptySet(&'static str),
    #[error("invalid model config: {0}")]
    BadConfig(String),
}

/// Architecture hyperparameters. Vocabulary sizes are filled in when the
/// model is constructed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub width: usize,
    pub heads: usize,
    pub ffn_width: usize,
    pub max_len: usize,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            enc_layers: 2,
            dec_layers: 2,
            width: 128,
            heads: 4,
            ffn_width: 256,
            max_len: 64,
            src_vocab: 0,
            tgt_vocab: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("enc_layers", self.enc_layers),
            ("dec_layers", self.dec_layers),
            ("width", self.width),
            ("heads", self.heads),
            ("ffn_width", self.ffn_width),
            ("max_len", self.max_len),
            ("src_vocab", self.src_vocab),
            ("tgt_vocab", self.tgt_vocab),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::BadConfig(format!("{name} must be positive")));
            }
        }
        if self.width % self.heads != 0 {
            return Err(ModelError::BadConfig(format!(
                "width {} not divisible by heads {}",
                self.width, self.heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct AttnIds {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct FfnIds {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct LnIds {
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Debug, Clone)]
struct EncLayerIds {
    ln1: LnIds,
    attn: AttnIds,
    ln2: LnIds,
    ffn: FfnIds,
}

#[derive(Debug, Clone)]
struct DecLayerIds {
    ln1: LnIds,
    self_attn: AttnIds,
    ln2: LnIds,
    cross_attn: AttnIds,
    ln3: LnIds,
    ffn: FfnIds,
}

#[derive(Debug, Clone)]
struct LayoutIds {
    src_embed: ParamId,
    tgt_embed: ParamId,
    enc: Vec<EncLayerIds>,
    enc_final: LnIds,
    dec: Vec<DecLayerIds>,
    dec_final: LnIds,
    out_w: ParamId,
    out_b: ParamId,
}

/// Encoder-decoder model over token ids, with the vocabularies it was
/// built for. Pre-norm transformer blocks, sinusoidal positions.
#[derive(Debug, Clone)]
pub struct Seq2SeqModel<S: Scalar> {
    cfg: ModelConfig,
    params: ParamStore<S>,
    ids: LayoutIds,
    pos_enc: Matrix<S>,
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    steps_trained: u64,
}

impl<S: Scalar> Seq2SeqModel<S> {
    /// Fresh model with seeded Xavier-uniform weights.
    pub fn new(
        mut cfg: ModelConfig,
        src_vocab: Vocabulary,
        tgt_vocab: Vocabulary,
        seed: u64,
    ) -> Result<Self, ModelError> {
        cfg.src_vocab = src_vocab.len();
        cfg.tgt_vocab = tgt_vocab.len();
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let ids = build_layout(&cfg, &mut params, &mut rng);
        let pos_enc = sinusoidal_positions(cfg.max_len, cfg.width);
        Ok(Seq2SeqModel {
            cfg,
            params,
            ids,
            pos_enc,
            src_vocab,
            tgt_vocab,
            steps_trained: 0,
        })
    }

    pub(crate) fn from_parts(
        cfg: ModelConfig,
        params: ParamStore<S>,
        src_vocab: Vocabulary,
        tgt_vocab: Vocabulary,
        steps_trained: u64,
    ) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut check = ParamStore::<S>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ids = build_layout(&cfg, &mut check, &mut rng);
        for (id, name, tensor) in check.iter() {
            let loaded = params
                .id_by_name(name)
                .ok_or_else(|| ModelError::BadConfig(format!("missing parameter {name}")))?;
            let got = params.get(loaded);
            if (got.rows(), got.cols()) != (tensor.rows(), tensor.cols()) {
                return Err(ModelError::BadConfig(format!(
                    "parameter {name} has shape {}x{}, expected {}x{}",
                    got.rows(),
                    got.cols(),
                    tensor.rows(),
                    tensor.cols()
                )));
            }
            let _ = id;
        }
        let pos_enc = sinusoidal_positions(cfg.max_len, cfg.width);
        Ok(Seq2SeqModel {
            cfg,
            params,
            ids,
            pos_enc,
            src_vocab,
            tgt_vocab,
            steps_trained,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn src_vocab(&self) -> &Vocabulary {
        &self.src_vocab
    }

    pub fn tgt_vocab(&self) -> &Vocabulary {
        &self.tgt_vocab
    }

    pub fn steps_trained(&self) -> u64 {
        self.steps_trained
    }

    pub(crate) fn set_steps_trained(&mut self, steps: u64) {
        self.steps_trained = steps;
    }

    pub fn params(&self) -> &ParamStore<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    pub fn check_finite(&self) -> Result<(), ModelError> {
        match self.params.find_non_finite() {
            Some(name) => Err(ModelError::NonFinite {
                param: name.to_string(),
            }),
            None => Ok(()),
        }
    }

    /// Source token ids: optional register tag, tokens, EOS.
    pub fn encode_source(&self, x: &Sentence, tag: Option<usize>) -> Result<Vec<usize>, ModelError> {
        if x.is_empty() {
            return Err(ModelError::EmptySource);
        }
        let mut ids = Vec::with_capacity(x.len() + 2);
        if let Some(t) = tag {
            ids.push(t);
        }
        ids.extend(self.src_vocab.encode(x));
        ids.push(EOS_ID);
        if ids.len() > self.cfg.max_len {
            return Err(ModelError::SequenceTooLong {
                len: ids.len(),
                max: self.cfg.max_len,
            });
        }
        Ok(ids)
    }

    /// Decoder input ([BOS, y…]) and teacher targets ([y…, EOS]).
    pub fn encode_target(&self, y: &Sentence) -> Result<(Vec<usize>, Vec<usize>), ModelError> {
        if y.is_empty() {
            return Err(ModelError::EmptyTarget);
        }
        let ids = self.tgt_vocab.encode(y);
        if ids.len() + 1 > self.cfg.max_len {
            return Err(ModelError::SequenceTooLong {
                len: ids.len() + 1,
                max: self.cfg.max_len,
            });
        }
        let mut input = Vec::with_capacity(ids.len() + 1);
        input.push(BOS_ID);
        input.extend(&ids);
        let mut output = ids;
        output.push(EOS_ID);
        Ok((input, output))
    }

    fn pos_slice(&self, len: usize) -> Matrix<S> {
        let mut out = Matrix::zeros(len, self.cfg.width);
        for r in 0..len {
            out.row_mut(r).copy_from_slice(self.pos_enc.row(r));
        }
        out
    }

    fn attention(
        &self,
        tape: &mut Tape<'_, S>,
        q_in: NodeId,
        kv_in: NodeId,
        attn: &AttnIds,
        causal: bool,
    ) -> NodeId {
        let q = tape.matmul_param(q_in, attn.wq);
        let q = tape.add_bias(q, attn.bq);
        let k = tape.matmul_param(kv_in, attn.wk);
        let k = tape.add_bias(k, attn.bk);
        let v = tape.matmul_param(kv_in, attn.wv);
        let v = tape.add_bias(v, attn.bv);

        let heads = self.cfg.heads;
        let dh = self.cfg.width / heads;
        let scale = S::from_f64(1.0 / (dh as f64).sqrt());
        let lq = tape.value(q).rows();
        let lk = tape.value(k).rows();
        let mask = causal.then(|| causal_mask::<S>(lq, lk));

        let mut parts = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = tape.slice_cols(q, h * dh, dh);
            let kh = tape.slice_cols(k, h * dh, dh);
            let vh = tape.slice_cols(v, h * dh, dh);
            let scores = tape.matmul_bt(qh, kh);
            let scores = tape.scale(scores, scale);
            let scores = match &mask {
                Some(m) => tape.add_const(scores, m),
                None => scores,
            };
            let weights = tape.softmax_rows(scores);
            parts.push(tape.matmul(weights, vh));
        }
        let ctx = tape.concat_cols(&parts);
        let out = tape.matmul_param(ctx, attn.wo);
        tape.add_bias(out, attn.bo)
    }

    fn feed_forward(&self, tape: &mut Tape<'_, S>, x: NodeId, ffn: &FfnIds) -> NodeId {
        let h = tape.matmul_param(x, ffn.w1);
        let h = tape.add_bias(h, ffn.b1);
        let h = tape.relu(h);
        let h = tape.matmul_param(h, ffn.w2);
        tape.add_bias(h, ffn.b2)
    }

    fn encoder_forward(&self, tape: &mut Tape<'_, S>, src_ids: &[usize]) -> NodeId {
        let emb = tape.gather(self.ids.src_embed, src_ids);
        let mut x = tape.add_const(emb, &self.pos_slice(src_ids.len()));
        for layer in &self.ids.enc {
            let a = tape.layer_norm(x, layer.ln1.gamma, layer.ln1.beta);
            let sa = self.attention(tape, a, a, &layer.attn, false);
            x = tape.add(x, sa);
            let f = tape.layer_norm(x, layer.ln2.gamma, layer.ln2.beta);
            let ff = self.feed_forward(tape, f, &layer.ffn);
            x = tape.add(x, ff);
        }
        tape.layer_norm(x, self.ids.enc_final.gamma, self.ids.enc_final.beta)
    }

    fn decoder_forward(&self, tape: &mut Tape<'_, S>, enc: NodeId, tgt_in: &[usize]) -> NodeId {
        let emb = tape.gather(self.ids.tgt_embed, tgt_in);
        let mut y = tape.add_const(emb, &self.pos_slice(tgt_in.len()));
        for layer in &self.ids.dec {
            let a = tape.layer_norm(y, layer.ln1.gamma, layer.ln1.beta);
            let sa = self.attention(tape, a, a, &layer.self_attn, true);
            y = tape.add(y, sa);
            let c = tape.layer_norm(y, layer.ln2.gamma, layer.ln2.beta);
            let ca = self.attention(tape, c, enc, &layer.cross_attn, false);
            y = tape.add(y, ca);
            let f = tape.layer_norm(y, layer.ln3.gamma, layer.ln3.beta);
            let ff = self.feed_forward(tape, f, &layer.ffn);
            y = tape.add(y, ff);
        }
        let y = tape.layer_norm(y, self.ids.dec_final.gamma, self.ids.dec_final.beta);
        let logits = tape.matmul_param(y, self.ids.out_w);
        let logits = tape.add_bias(logits, self.ids.out_b);
        tape.log_softmax_rows(logits)
    }

    /// Per-position log-probabilities over the target vocabulary for a
    /// teacher-forced pass; row i conditions on `tgt_in[..=i]` and the source.
    pub fn forward_log_probs(
        &self,
        src_ids: &[usize],
        tgt_in: &[usize],
    ) -> Result<Matrix<S>, ModelError> {
        let mut tape = Tape::new(&self.params);
        let enc = self.encoder_forward(&mut tape, src_ids);
        let logp = self.decoder_forward(&mut tape, enc, tgt_in);
        Ok(tape.value(logp).clone())
    }

    /// Mean negative log-likelihood of the reference target (per-token,
    /// EOS included).
    pub fn nll_loss(&self, x: &Sentence, y: &Sentence) -> Result<S, ModelError> {
        let src = self.encode_source(x, None)?;
        let (tgt_in, tgt_out) = self.encode_target(y)?;
        self.nll_loss_ids(&src, &tgt_in, &tgt_out)
    }

    /// As [`Seq2SeqModel::nll_loss`] but over raw token ids.
    pub fn nll_loss_ids(
        &self,
        src: &[usize],
        tgt_in: &[usize],
        tgt_out: &[usize],
    ) -> Result<S, ModelError> {
        let logp = self.forward_log_probs(src, tgt_in)?;
        let m = S::from_f64(tgt_out.len() as f64);
        let mut loss = S::zero();
        for (i, &t) in tgt_out.iter().enumerate() {
            loss = loss - logp.get(i, t);
        }
        let loss = loss / m;
        if !loss.is_finite() {
            self.check_finite()?;
            return Err(ModelError::NonFiniteLoss);
        }
        Ok(loss)
    }

    /// Total log-probability of `y` given `x` (sum over tokens and EOS).
    pub fn sequence_log_prob(&self, x: &Sentence, y: &Sentence) -> Result<S, ModelError> {
        let src = self.encode_source(x, None)?;
        let (tgt_in, tgt_out) = self.encode_target(y)?;
        let logp = self.forward_log_probs(&src, &tgt_in)?;
        let mut total = S::zero();
        for (i, &t) in tgt_out.iter().enumerate() {
            total = total + logp.get(i, t);
        }
        Ok(total)
    }

    /// Backpropagates `weight * nll` for one sample into `grads`; returns the
    /// unweighted per-token loss. With `weight` set to a sequence reward this
    /// is the gradient of the reward-weighted log-likelihood term.
    pub fn nll_backward(
        &self,
        src: &[usize],
        tgt_in: &[usize],
        tgt_out: &[usize],
        weight: S,
        grads: &mut GradStore<S>,
    ) -> Result<S, ModelError> {
        let mut tape = Tape::new(&self.params);
        let enc = self.encoder_forward(&mut tape, src);
        let logp = self.decoder_forward(&mut tape, enc, tgt_in);
        let m = S::from_f64(tgt_out.len() as f64);
        let mut loss = S::zero();
        for (i, &t) in tgt_out.iter().enumerate() {
            loss = loss - tape.value(logp).get(i, t);
        }
        let loss = loss / m;
        if !loss.is_finite() {
            self.check_finite()?;
            return Err(ModelError::NonFiniteLoss);
        }
        let mut seed = Matrix::zeros(tgt_in.len(), self.cfg.tgt_vocab);
        let gv = -(weight / m);
        for (i, &t) in tgt_out.iter().enumerate() {
            seed.set(i, t, gv);
        }
        tape.seed_grad(logp, seed);
        tape.backward(grads);
        Ok(loss)
    }

    /// Runs the encoder once and returns a stepwise next-token scorer for
    /// beam search and sampling.
    pub fn scorer_for(&self, x: &Sentence, tag: Option<usize>) -> Result<SentenceScorer<'_, S>, ModelError> {
        let src = self.encode_source(x, tag)?;
        let mut tape = Tape::new(&self.params);
        let enc = self.encoder_forward(&mut tape, &src);
        let enc = tape.value(enc).clone();
        Ok(SentenceScorer { model: self, enc })
    }

    /// Highest length-normalized beam hypothesis, decoded to a sentence.
    pub fn decode_beam(&self, x: &Sentence, beam: usize) -> Result<BeamHypothesis<S>, ModelError> {
        let scorer = self.scorer_for(x, None)?;
        Ok(beam_search(&scorer, beam))
    }

    /// Beam decoding with a register tag prepended to the source.
    pub fn decode_beam_tagged(
        &self,
        x: &Sentence,
        tag: usize,
        beam: usize,
    ) -> Result<BeamHypothesis<S>, ModelError> {
        let scorer = self.scorer_for(x, Some(tag))?;
        Ok(beam_search(&scorer, beam))
    }

    /// Ancestral sample from the decoder distribution. The returned per-token
    /// log-probs are under the untempered model distribution.
    pub fn sample_translation(
        &self,
        x: &Sentence,
        temperature: f64,
        rng: &mut impl Rng,
    ) -> Result<SampledSequence<S>, ModelError> {
        let scorer = self.scorer_for(x, None)?;
        Ok(sample_sequence(&scorer, temperature, None, rng))
    }

    pub fn ids_to_sentence(&self, ids: &[usize]) -> Sentence {
        self.tgt_vocab.decode(ids)
    }
}

/// Stepwise decoder view of one encoded source sentence.
pub struct SentenceScorer<'m, S: Scalar> {
    model: &'m Seq2SeqModel<S>,
    enc: Matrix<S>,
}

impl<S: Scalar> NextTokenScorer<S> for SentenceScorer<'_, S> {
    fn vocab_size(&self) -> usize {
        self.model.cfg.tgt_vocab
    }

    fn bos_id(&self) -> usize {
        BOS_ID
    }

    fn eos_id(&self) -> usize {
        EOS_ID
    }

    fn max_len(&self) -> usize {
        self.model.cfg.max_len
    }

    fn forbidden_ids(&self) -> Vec<usize> {
        vec![crate::corpus::PAD_ID, BOS_ID, TAG_ORIG_ID, TAG_TRAN_ID]
    }

    fn next_log_probs(&self, prefix: &[usize]) -> Vec<S> {
        let mut tape = Tape::new(&self.model.params);
        let enc = tape.constant(self.enc.clone());
        let logp = self.model.decoder_forward(&mut tape, enc, prefix);
        tape.value(logp).row(prefix.len() - 1).to_vec()
    }
}

fn causal_mask<S: Scalar>(lq: usize, lk: usize) -> Matrix<S> {
    let mut m = Matrix::zeros(lq, lk);
    let neg = S::from_f64(ATTN_MASK);
    for i in 0..lq {
        for j in (i + 1)..lk {
            m.set(i, j, neg);
        }
    }
    m
}

fn sinusoidal_positions<S: Scalar>(max_len: usize, width: usize) -> Matrix<S> {
    let mut pe = Matrix::zeros(max_len, width);
    for pos in 0..max_len {
        for i in 0..width / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / width as f64);
            pe.set(pos, 2 * i, S::from_f64(angle.sin()));
            pe.set(pos, 2 * i + 1, S::from_f64(angle.cos()));
        }
    }
    pe
}

fn xavier<S: Scalar>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<S> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| S::from_f64(rng.gen_range(-limit..limit)))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

fn add_ln<S: Scalar>(params: &mut ParamStore<S>, prefix: &str, width: usize) -> LnIds {
    let mut gamma = Matrix::zeros(1, width);
    gamma.fill(S::one());
    LnIds {
        gamma: params.add(format!("{prefix}.gamma"), gamma),
        beta: params.add(format!("{prefix}.beta"), Matrix::zeros(1, width)),
    }
}

fn add_attn<S: Scalar>(
    params: &mut ParamStore<S>,
    prefix: &str,
    width: usize,
    rng: &mut ChaCha8Rng,
) -> AttnIds {
    AttnIds {
        wq: params.add(format!("{prefix}.wq"), xavier(width, width, rng)),
        bq: params.add(format!("{prefix}.bq"), Matrix::zeros(1, width)),
        wk: params.add(format!("{prefix}.wk"), xavier(width, width, rng)),
        bk: params.add(format!("{prefix}.bk"), Matrix::zeros(1, width)),
        wv: params.add(format!("{prefix}.wv"), xavier(width, width, rng)),
        bv: params.add(format!("{prefix}.bv"), Matrix::zeros(1, width)),
        wo: params.add(format!("{prefix}.wo"), xavier(width, width, rng)),
        bo: params.add(format!("{prefix}.bo"), Matrix::zeros(1, width)),
    }
}

fn add_ffn<S: Scalar>(
    params: &mut ParamStore<S>,
    prefix: &str,
    width: usize,
    ffn_width: usize,
    rng: &mut ChaCha8Rng,
) -> FfnIds {
    FfnIds {
        w1: params.add(format!("{prefix}.w1"), xavier(width, ffn_width, rng)),
        b1: params.add(format!("{prefix}.b1"), Matrix::zeros(1, ffn_width)),
        w2: params.add(format!("{prefix}.w2"), xavier(ffn_width, width, rng)),
        b2: params.add(format!("{prefix}.b2"), Matrix::zeros(1, width)),
    }
}

fn build_layout<S: Scalar>(
    cfg: &ModelConfig,
    params: &mut ParamStore<S>,
    rng: &mut ChaCha8Rng,
) -> LayoutIds {
    let src_embed = params.add("src_embed", xavier(cfg.src_vocab, cfg.width, rng));
    let tgt_embed = params.add("tgt_embed", xavier(cfg.tgt_vocab, cfg.width, rng));
    let mut enc = Vec::with_capacity(cfg.enc_layers);
    for l in 0..cfg.enc_layers {
        let p = format!("enc.{l}");
        enc.push(EncLayerIds {
            ln1: add_ln(params, &format!("{p}.ln1"), cfg.width),
            attn: add_attn(params, &format!("{p}.attn"), cfg.width, rng),
            ln2: add_ln(params, &format!("{p}.ln2"), cfg.width),
            ffn: add_ffn(params, &format!("{p}.ffn"), cfg.width, cfg.ffn_width, rng),
        });
    }
    let enc_final = add_ln(params, "enc.final_ln", cfg.width);
    let mut dec = Vec::with_capacity(cfg.dec_layers);
    for l in 0..cfg.dec_layers {
        let p = format!("dec.{l}");
        dec.push(DecLayerIds {
            ln1: add_ln(params, &format!("{p}.ln1"), cfg.width),
            self_attn: add_attn(params, &format!("{p}.self_attn"), cfg.width, rng),
            ln2: add_ln(params, &format!("{p}.ln2"), cfg.width),
            cross_attn: add_attn(params, &format!("{p}.cross_attn"), cfg.width, rng),
            ln3: add_ln(params, &format!("{p}.ln3"), cfg.width),
            ffn: add_ffn(params, &format!("{p}.ffn"), cfg.width, cfg.ffn_width, rng),
        });
    }
    let dec_final = add_ln(params, "dec.final_ln", cfg.width);
    let out_w = params.add("out_proj.w", xavier(cfg.width, cfg.tgt_vocab, rng));
    let out_b = params.add("out_proj.b", Matrix::zeros(1, cfg.tgt_vocab));
    LayoutIds {
        src_embed,
        tgt_embed,
        enc,
        enc_final,
        dec,
        dec_final,
        out_w,
        out_b,
    }
}
