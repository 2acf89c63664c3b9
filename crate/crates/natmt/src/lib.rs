//! Reward-based alignment of a seq2seq translation model toward natural
//! output, plus the classifiers, rewards and evaluation metrics around it.
//!
//! The numeric core (model, classifier, rewards, alignment) is generic over
//! the [`Scalar`] floating-point type; the aliases below pin the production
//! instantiation.

pub mod align;
pub mod classifier;
pub mod corpus;
pub mod evalreport;
pub mod graph;
mod hash;
pub mod metrics;
pub mod reward;
pub mod scalar;
pub mod seq2seq;
mod tensor;

pub use scalar::Scalar;
pub use tensor::Matrix;

/// Default scalar type for production runs; tests instantiate `f64` where
/// tight tolerances matter.
pub type DefaultScalar = f32;

pub type Model = seq2seq::Seq2SeqModel<DefaultScalar>;
pub type ModelCheckpoint = seq2seq::Checkpoint<DefaultScalar>;
pub type Classifier = classifier::NaturalnessClassifier<DefaultScalar>;
pub type Rewards = reward::RewardConfig<DefaultScalar>;
pub type Aligner = align::AlignConfig<DefaultScalar>;
