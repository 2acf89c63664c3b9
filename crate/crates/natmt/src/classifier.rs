//! Binary translationese classifiers: hashed character n-gram + word unigram
//! features under L2-regularized logistic regression. Used both as reward
//! models and as evaluation instruments.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::corpus::{LabeledText, Perspective, Sentence};
use crate::hash::fnv1a_64;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training data contains only one class")]
    SingleClass,
    #[error("training data is empty")]
    EmptyData,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("corrupt classifier file: {0}")]
    Corrupt(String),
}

/// Feature extraction settings; the hash space is `1 << hash_bits`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpec {
    pub char_orders: Vec<usize>,
    pub word_unigrams: bool,
    pub hash_bits: u32,
    pub lowercase: bool,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            char_orders: vec![1, 2, 3, 4],
            word_unigrams: true,
            hash_bits: 18,
            lowercase: true,
        }
    }
}

impl FeatureSpec {
    pub fn space_size(&self) -> usize {
        1 << self.hash_bits
    }
}

/// Sparse L2-normalized feature vector, id-sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<S> {
    pairs: Vec<(u32, S)>,
}

impl<S: Scalar> FeatureVector<S> {
    pub fn pairs(&self) -> &[(u32, S)] {
        &self.pairs
    }

    pub fn is_zero(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn dot_dense(&self, weights: &[S]) -> S {
        self.pairs
            .iter()
            .map(|&(id, v)| weights[id as usize] * v)
            .sum()
    }
}

/// Hashed counts of character n-grams over the (optionally lowercased) raw
/// string plus word unigrams, L2-normalized.
pub fn featurize<S: Scalar>(sentence: &Sentence, spec: &FeatureSpec) -> FeatureVector<S> {
    let mask = (spec.space_size() - 1) as u64;
    let mut counts: HashMap<u32, u32> = HashMap::new();

    let text = if spec.lowercase {
        sentence.raw.to_lowercase()
    } else {
        sentence.raw.clone()
    };
    let chars: Vec<char> = text.chars().collect();
    let mut buf = String::new();
    for &n in &spec.char_orders {
        if n == 0 || chars.len() < n {
            continue;
        }
        for w in chars.windows(n) {
            buf.clear();
            buf.push_str("c:");
            buf.extend(w.iter());
            let id = (fnv1a_64(buf.as_bytes()) & mask) as u32;
            *counts.entry(id).or_insert(0) += 1;
        }
    }
    if spec.word_unigrams {
        for tok in &sentence.tokens {
            buf.clear();
            buf.push_str("w:");
            if spec.lowercase {
                buf.push_str(&tok.as_str().to_lowercase());
            } else {
                buf.push_str(tok.as_str());
            }
            let id = (fnv1a_64(buf.as_bytes()) & mask) as u32;
            *counts.entry(id).or_insert(0) += 1;
        }
    }

    let mut pairs: Vec<(u32, S)> = counts
        .into_iter()
        .map(|(id, c)| (id, S::from_f64(f64::from(c))))
        .collect();
    pairs.sort_by_key(|&(id, _)| id);
    let norm = pairs
        .iter()
        .map(|&(_, v)| v * v)
        .sum::<S>()
        .sqrt();
    if norm > S::zero() {
        for (_, v) in pairs.iter_mut() {
            *v = *v / norm;
        }
    }
    FeatureVector { pairs }
}

/// Logistic-regression scorer p(t₁ | sentence); immutable once trained.
#[derive(Debug, Clone)]
pub struct NaturalnessClassifier<S: Scalar> {
    perspective: Perspective,
    spec: FeatureSpec,
    weights: Vec<S>,
    bias: S,
}

#[derive(Debug, Clone)]
pub struct ClassifierTrainConfig {
    pub spec: FeatureSpec,
    /// L2 penalty strength.
    pub reg: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        ClassifierTrainConfig {
            spec: FeatureSpec::default(),
            reg: 1e-4,
            learning_rate: 2.0,
            epochs: 200,
            seed: 0,
        }
    }
}

impl<S: Scalar> NaturalnessClassifier<S> {
    /// Builds a classifier from explicit weights (for tests and plug-in
    /// scorers). `weights` must have `spec.space_size()` entries.
    pub fn with_weights(
        perspective: Perspective,
        spec: FeatureSpec,
        weights: Vec<S>,
        bias: S,
    ) -> Self {
        assert_eq!(weights.len(), spec.space_size());
        NaturalnessClassifier {
            perspective,
            spec,
            weights,
            bias,
        }
    }

    pub fn perspective(&self) -> Perspective {
        self.perspective
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    /// p(t₁ | sentence) as the sigmoid of the linear score.
    pub fn score_naturalness(&self, sentence: &Sentence) -> S {
        let f = featurize::<S>(sentence, &self.spec);
        self.score_features(&f)
    }

    pub fn score_features(&self, features: &FeatureVector<S>) -> S {
        sigmoid(features.dot_dense(&self.weights) + self.bias)
    }

    /// p(t₀) = 1 − p(t₁); the complement identity holds exactly.
    pub fn complement_score(&self, sentence: &Sentence) -> S {
        S::one() - self.score_naturalness(sentence)
    }

    /// Predicted label; scores at exactly 0.5 classify as t₁.
    pub fn predict(&self, sentence: &Sentence) -> bool {
        self.score_naturalness(sentence) >= S::from_f64(0.5)
    }
}

fn sigmoid<S: Scalar>(z: S) -> S {
    let one = S::one();
    if z >= S::zero() {
        one / (one + (-z).exp())
    } else {
        let e = z.exp();
        e / (one + e)
    }
}

/// Trains by deterministic full-batch gradient descent on the logistic loss
/// with L2 penalty `cfg.reg`. Returns the classifier and its training
/// accuracy. The effective step size is capped at `0.9 / (1 + reg)` so the
/// shrinkage step stays contractive for any penalty strength.
pub fn train_classifier<S: Scalar>(
    data: &[LabeledText],
    perspective: Perspective,
    cfg: &ClassifierTrainConfig,
) -> Result<(NaturalnessClassifier<S>, f64), ClassifierError> {
    if data.is_empty() {
        return Err(ClassifierError::EmptyData);
    }
    let n_pos = data.iter().filter(|d| d.label).count();
    if n_pos == 0 || n_pos == data.len() {
        return Err(ClassifierError::SingleClass);
    }
    let features: Vec<FeatureVector<S>> = data
        .iter()
        .map(|d| featurize(&d.sentence, &cfg.spec))
        .collect();
    let labels: Vec<S> = data
        .iter()
        .map(|d| if d.label { S::one() } else { S::zero() })
        .collect();

    let size = cfg.spec.space_size();
    let mut weights = vec![S::zero(); size];
    let mut bias = S::zero();
    let n = S::from_f64(data.len() as f64);
    let lr = S::from_f64(cfg.learning_rate.min(0.9 / (1.0 + cfg.reg)));
    let reg = S::from_f64(cfg.reg);

    let mut grad = vec![S::zero(); size];
    for _ in 0..cfg.epochs {
        grad.iter_mut().for_each(|g| *g = S::zero());
        let mut grad_bias = S::zero();
        for (f, &y) in features.iter().zip(&labels) {
            let p = sigmoid(f.dot_dense(&weights) + bias);
            let err = p - y;
            for &(id, v) in f.pairs() {
                grad[id as usize] = grad[id as usize] + err * v;
            }
            grad_bias = grad_bias + err;
        }
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w = *w - lr * (*g / n + reg * *w);
        }
        bias = bias - lr * grad_bias / n;
    }

    let clf = NaturalnessClassifier {
        perspective,
        spec: cfg.spec.clone(),
        weights,
        bias,
    };
    let correct = features
        .iter()
        .zip(data)
        .filter(|(f, d)| (clf.score_features(f) >= S::from_f64(0.5)) == d.label)
        .count();
    let accuracy = correct as f64 / data.len() as f64;
    Ok((clf, accuracy))
}

/// 2×2 confusion counts; rows are true labels, columns predictions, index 1
/// is the preferred class t₁.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 2]; 2],
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        (self.counts[0][0] + self.counts[1][1]) as f64 / self.total() as f64
    }

    pub fn to_tsv(&self) -> String {
        format!(
            "\tpred_t0\tpred_t1\ntrue_t0\t{}\t{}\ntrue_t1\t{}\t{}\n",
            self.counts[0][0], self.counts[0][1], self.counts[1][0], self.counts[1][1]
        )
    }
}

/// Evaluates a classifier on a labeled set at the given threshold
/// (score ≥ threshold predicts t₁).
pub fn confusion_matrix<S: Scalar>(
    clf: &NaturalnessClassifier<S>,
    test: &[LabeledText],
    threshold: f64,
) -> Result<ConfusionMatrix, ClassifierError> {
    if test.is_empty() {
        return Err(ClassifierError::EmptyTestSet);
    }
    let thr = S::from_f64(threshold);
    let mut counts = [[0usize; 2]; 2];
    for item in test {
        let pred = clf.score_naturalness(&item.sentence) >= thr;
        counts[usize::from(item.label)][usize::from(pred)] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Accuracy grid of every classifier on every perspective's test set
/// (rows: classifiers, columns: test sets), as a TSV table.
pub fn cross_perspective_grid<S: Scalar>(
    classifiers: &[&NaturalnessClassifier<S>],
    testsets: &[(Perspective, Vec<LabeledText>)],
) -> Result<String, ClassifierError> {
    let mut out = String::from("classifier");
    for (p, _) in testsets {
        out.push('\t');
        out.push_str(p.as_str());
    }
    out.push('\n');
    for clf in classifiers {
        out.push_str(clf.perspective().as_str());
        for (_, set) in testsets {
            let acc = confusion_matrix(clf, set, 0.5)?.accuracy();
            out.push_str(&format!("\t{acc:.4}"));
        }
        out.push('\n');
    }
    Ok(out)
}

const CLF_MAGIC: &[u8; 8] = b"NATMTCL\0";
const CLF_VERSION: u32 = 1;

impl<S: Scalar> NaturalnessClassifier<S> {
    /// Versioned binary: perspective tag, feature spec, sparse weight blob.
    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        let io_err = |source| ClassifierError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
        let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(io_err);
        put(CLF_MAGIC)?;
        put(&CLF_VERSION.to_le_bytes())?;
        put(&[S::BYTE_WIDTH])?;
        let persp = match self.perspective {
            Perspective::HtOr => 0u8,
            Perspective::MtHt => 1,
            Perspective::MtOr => 2,
        };
        put(&[persp])?;
        put(&(self.spec.char_orders.len() as u32).to_le_bytes())?;
        for &o in &self.spec.char_orders {
            put(&(o as u32).to_le_bytes())?;
        }
        put(&[u8::from(self.spec.word_unigrams)])?;
        put(&self.spec.hash_bits.to_le_bytes())?;
        put(&[u8::from(self.spec.lowercase)])?;
        put(&self.bias.to_bits_u64().to_le_bytes()[..S::BYTE_WIDTH as usize])?;
        let nonzero: Vec<(u32, S)> = self
            .weights
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != S::zero())
            .map(|(i, v)| (i as u32, *v))
            .collect();
        put(&(nonzero.len() as u64).to_le_bytes())?;
        for (id, v) in nonzero {
            put(&id.to_le_bytes())?;
            put(&v.to_bits_u64().to_le_bytes()[..S::BYTE_WIDTH as usize])?;
        }
        w.flush().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<NaturalnessClassifier<S>, ClassifierError> {
        let io_err = |source| ClassifierError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut r = BufReader::new(std::fs::File::open(path).map_err(io_err)?);
        let mut take = |n: usize| -> Result<Vec<u8>, ClassifierError> {
            let mut buf = vec![0u8; n];
            r.read_exact(&mut buf).map_err(io_err)?;
            Ok(buf)
        };
        if take(8)? != CLF_MAGIC {
            return Err(ClassifierError::Corrupt("bad magic bytes".into()));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != CLF_VERSION {
            return Err(ClassifierError::Corrupt(format!("version {version}")));
        }
        let width = take(1)?[0];
        if width != S::BYTE_WIDTH {
            return Err(ClassifierError::Corrupt(format!(
                "scalar width {width}, expected {}",
                S::BYTE_WIDTH
            )));
        }
        let perspective = match take(1)?[0] {
            0 => Perspective::HtOr,
            1 => Perspective::MtHt,
            2 => Perspective::MtOr,
            other => {
                return Err(ClassifierError::Corrupt(format!(
                    "unknown perspective tag {other}"
                )))
            }
        };
        let n_orders = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        if n_orders > 16 {
            return Err(ClassifierError::Corrupt("too many n-gram orders".into()));
        }
        let mut char_orders = Vec::with_capacity(n_orders);
        for _ in 0..n_orders {
            char_orders.push(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize);
        }
        let word_unigrams = take(1)?[0] != 0;
        let hash_bits = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if hash_bits > 28 {
            return Err(ClassifierError::Corrupt("hash space too large".into()));
        }
        let lowercase = take(1)?[0] != 0;
        let spec = FeatureSpec {
            char_orders,
            word_unigrams,
            hash_bits,
            lowercase,
        };
        let read_scalar = |bytes: Vec<u8>| {
            let mut bits = [0u8; 8];
            bits[..S::BYTE_WIDTH as usize].copy_from_slice(&bytes);
            S::from_bits_u64(u64::from_le_bytes(bits))
        };
        let bias = read_scalar(take(S::BYTE_WIDTH as usize)?);
        let n_nonzero = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        if n_nonzero > spec.space_size() {
            return Err(ClassifierError::Corrupt("weight count exceeds space".into()));
        }
        let mut weights = vec![S::zero(); spec.space_size()];
        for _ in 0..n_nonzero {
            let id = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            if id >= weights.len() {
                return Err(ClassifierError::Corrupt("weight id out of range".into()));
            }
            weights[id] = read_scalar(take(S::BYTE_WIDTH as usize)?);
        }
        Ok(NaturalnessClassifier {
            perspective,
            spec,
            weights,
            bias,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sentence;

    fn spec_chars_only(orders: &[usize]) -> FeatureSpec {
        FeatureSpec {
            char_orders: orders.to_vec(),
            word_unigrams: false,
            hash_bits: 10,
            lowercase: true,
        }
    }

    fn s(text: &str) -> Sentence {
        crate::corpus::tokenize(text, true)
    }

    #[test]
    fn single_bigram_features_a_unit_vector() {
        let f = featurize::<f64>(&s("ab"), &spec_chars_only(&[2]));
        assert_eq!(f.pairs().len(), 1);
        assert!((f.pairs()[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_sentence_is_zero_vector() {
        let f = featurize::<f64>(&s(""), &FeatureSpec::default());
        assert!(f.is_zero());
    }

    #[test]
    fn features_are_permutation_sensitive() {
        let spec = spec_chars_only(&[2]);
        let a = featurize::<f64>(&s("ab"), &spec);
        let b = featurize::<f64>(&s("ba"), &spec);
        assert_ne!(a, b);
    }

    fn toy_data(n: usize) -> Vec<LabeledText> {
        // two clusters separated by their character inventory
        let mut data = Vec::new();
        for i in 0..n {
            data.push(LabeledText {
                sentence: s(&format!("aa ab ba a{i}")),
                label: true,
            });
            data.push(LabeledText {
                sentence: s(&format!("zz zy yz z{i}")),
                label: false,
            });
        }
        data
    }

    #[test]
    fn separable_data_trains_to_high_accuracy() {
        let data = toy_data(40);
        let cfg = ClassifierTrainConfig {
            spec: FeatureSpec {
                hash_bits: 12,
                ..FeatureSpec::default()
            },
            ..ClassifierTrainConfig::default()
        };
        let (clf, acc) = train_classifier::<f64>(&data, Perspective::MtHt, &cfg).unwrap();
        assert!(acc >= 0.99, "training accuracy {acc}");
        assert!(clf.score_naturalness(&s("ab aa")) > 0.5);
        assert!(clf.score_naturalness(&s("zy zz")) < 0.5);
    }

    #[test]
    fn huge_regularization_pushes_scores_to_half() {
        let data = toy_data(10);
        let cfg = ClassifierTrainConfig {
            reg: 1e9,
            ..ClassifierTrainConfig::default()
        };
        let (clf, _) = train_classifier::<f64>(&data, Perspective::HtOr, &cfg).unwrap();
        let score = clf.score_naturalness(&s("aa ab"));
        assert!((score - 0.5).abs() < 1e-3, "score {score}");
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_data(15);
        let cfg = ClassifierTrainConfig::default();
        let (c1, _) = train_classifier::<f64>(&data, Perspective::MtOr, &cfg).unwrap();
        let (c2, _) = train_classifier::<f64>(&data, Perspective::MtOr, &cfg).unwrap();
        assert_eq!(c1.weights, c2.weights);
        assert_eq!(c1.bias, c2.bias);
    }

    #[test]
    fn single_class_data_is_rejected() {
        let data: Vec<LabeledText> = (0..5)
            .map(|i| LabeledText {
                sentence: s(&format!("x{i}")),
                label: true,
            })
            .collect();
        let err =
            train_classifier::<f64>(&data, Perspective::HtOr, &ClassifierTrainConfig::default())
                .unwrap_err();
        assert!(matches!(err, ClassifierError::SingleClass));
    }

    #[test]
    fn zero_weight_classifier_scores_half_everywhere() {
        let spec = FeatureSpec::default();
        let clf = NaturalnessClassifier::with_weights(
            Perspective::HtOr,
            spec.clone(),
            vec![0.0f64; spec.space_size()],
            0.0,
        );
        assert_eq!(clf.score_naturalness(&s("anything at all")), 0.5);
        assert_eq!(clf.score_naturalness(&s("")), 0.5);
    }

    #[test]
    fn complement_identity_is_exact() {
        let data = toy_data(10);
        let (clf, _) =
            train_classifier::<f64>(&data, Perspective::MtHt, &ClassifierTrainConfig::default())
                .unwrap();
        for text in ["aa zz", "ab", "zy a9"] {
            let sent = s(text);
            let sum = clf.score_naturalness(&sent) + clf.complement_score(&sent);
            assert_eq!(sum, 1.0);
        }
    }

    #[test]
    fn aligned_weight_mass_strictly_raises_the_score() {
        let spec = spec_chars_only(&[2]);
        let sent = s("ab");
        let f = featurize::<f64>(&sent, &spec);
        let mut weights = vec![0.0f64; spec.space_size()];
        let clf = NaturalnessClassifier::with_weights(
            Perspective::HtOr,
            spec.clone(),
            weights.clone(),
            0.0,
        );
        let before = clf.score_naturalness(&sent);
        weights[f.pairs()[0].0 as usize] += 0.7;
        let clf = NaturalnessClassifier::with_weights(Perspective::HtOr, spec, weights, 0.0);
        assert!(clf.score_naturalness(&sent) > before);
    }

    #[test]
    fn perfect_classifier_confusion_is_diagonal() {
        let data = toy_data(10);
        let (clf, _) =
            train_classifier::<f64>(&data, Perspective::MtHt, &ClassifierTrainConfig::default())
                .unwrap();
        let m = confusion_matrix(&clf, &data, 0.5).unwrap();
        assert_eq!(m.counts[0][0] + m.counts[1][1], 20);
        assert_eq!(m.accuracy(), 1.0);
    }

    #[test]
    fn boundary_half_classifies_as_preferred() {
        let spec = FeatureSpec::default();
        let clf = NaturalnessClassifier::with_weights(
            Perspective::HtOr,
            spec.clone(),
            vec![0.0f64; spec.space_size()],
            0.0,
        );
        // constant-0.5 classifier predicts t₁ everywhere (inclusive boundary)
        let balanced: Vec<LabeledText> = (0..10)
            .map(|i| LabeledText {
                sentence: s(&format!("t{i}")),
                label: i % 2 == 0,
            })
            .collect();
        let m = confusion_matrix(&clf, &balanced, 0.5).unwrap();
        assert_eq!(m.counts[0][1], 5);
        assert_eq!(m.counts[1][1], 5);
        assert_eq!(m.counts[0][0] + m.counts[1][0], 0);
        assert!((m.accuracy() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_test_set_is_an_error() {
        let spec = FeatureSpec::default();
        let clf = NaturalnessClassifier::with_weights(
            Perspective::HtOr,
            spec.clone(),
            vec![0.0f64; spec.space_size()],
            0.0,
        );
        assert!(matches!(
            confusion_matrix(&clf, &[], 0.5),
            Err(ClassifierError::EmptyTestSet)
        ));
    }

    #[test]
    fn save_load_round_trip_preserves_scores() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clf.bin");
        let data = toy_data(12);
        let (clf, _) =
            train_classifier::<f32>(&data, Perspective::MtOr, &ClassifierTrainConfig::default())
                .unwrap();
        clf.save(&path).unwrap();
        let loaded: NaturalnessClassifier<f32> = NaturalnessClassifier::load(&path).unwrap();
        assert_eq!(loaded.perspective(), Perspective::MtOr);
        for text in ["aa ab", "zz zy", "mixed aa zz"] {
            let sent = s(text);
            assert_eq!(
                clf.score_naturalness(&sent).to_bits(),
                loaded.score_naturalness(&sent).to_bits()
            );
        }
    }

    #[test]
    fn grid_emits_three_by_three_accuracies() {
        let data = toy_data(8);
        let cfg = ClassifierTrainConfig::default();
        let (c1, _) = train_classifier::<f64>(&data, Perspective::HtOr, &cfg).unwrap();
        let (c2, _) = train_classifier::<f64>(&data, Perspective::MtHt, &cfg).unwrap();
        let (c3, _) = train_classifier::<f64>(&data, Perspective::MtOr, &cfg).unwrap();
        let sets = vec![
            (Perspective::HtOr, data.clone()),
            (Perspective::MtHt, data.clone()),
            (Perspective::MtOr, data),
        ];
        let grid = cross_perspective_grid(&[&c1, &c2, &c3], &sets).unwrap();
        let lines: Vec<&str> = grid.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("classifier\tHT-OR\tMT-HT\tMT-OR"));
        assert_eq!(lines[1].split('\t').count(), 4);
    }
}
