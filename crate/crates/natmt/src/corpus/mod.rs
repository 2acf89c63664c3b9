//! Corpus ingestion: tokenization, vocabulary, provenance-labeled documents,
//! parallel pairs, and the dataset constructions feeding the classifiers.

mod manifest;
pub mod synth;
mod tokenize;
mod vocab;

pub use manifest::{load_corpus, CorpusManifest, LoadedCorpus, ManifestEntry, ParallelBook, Split};
pub use tokenize::tokenize;
pub use vocab::{Vocabulary, BOS_ID, EOS_ID, PAD_ID, TAG_ORIG_ID, TAG_TRAN_ID, UNK_ID};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line count mismatch: {left} has {left_lines} lines, {right} has {right_lines}")]
    LineCountMismatch {
        left: String,
        right: String,
        left_lines: usize,
        right_lines: usize,
    },
    #[error("unknown provenance label {0:?} (expected OR, HT or MT)")]
    UnknownProvenance(String),
    #[error("unknown split {0:?} (expected train, valid or test)")]
    UnknownSplit(String),
    #[error("document id {0:?} assigned more than once in manifest")]
    DuplicateId(String),
    #[error("manifest line {line}: {message}")]
    BadManifestLine { line: usize, message: String },
    #[error("empty sentence after tokenization in {path} line {line}")]
    EmptySentence { path: String, line: usize },
    #[error("no documents with provenance {0} available for this perspective")]
    MissingPool(Provenance),
    #[error("model has not been trained; refusing to synthesize an MT corpus")]
    UntrainedModel,
    #[error("translation failed during corpus synthesis: {0}")]
    SynthesisDecode(String),
}

/// A single post-normalization token: non-empty, no whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(String);

impl Token {
    pub fn new(surface: impl Into<String>) -> Token {
        let surface = surface.into();
        debug_assert!(!surface.is_empty());
        debug_assert!(!surface.chars().any(char::is_whitespace));
        Token(surface)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for Token {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub raw: String,
}

impl Sentence {
    /// Canonical sentence for a token sequence; `raw` is the space-joined surface.
    pub fn from_tokens(tokens: Vec<Token>) -> Sentence {
        let raw = tokens
            .iter()
            .map(Token::as_str)
            .collect::<Vec<_>>()
            .join(" ");
        Sentence { tokens, raw }
    }

    pub fn from_words(words: &[&str]) -> Sentence {
        Sentence::from_tokens(words.iter().map(|w| Token::new(*w)).collect())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token_strs(&self) -> Vec<&str> {
        self.tokens.iter().map(Token::as_str).collect()
    }
}

/// Provenance of a text: original, human-translated, or machine-translated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Or,
    Ht,
    Mt,
}

impl Provenance {
    pub fn parse(s: &str) -> Result<Provenance, CorpusError> {
        match s {
            "OR" => Ok(Provenance::Or),
            "HT" => Ok(Provenance::Ht),
            "MT" => Ok(Provenance::Mt),
            other => Err(CorpusError::UnknownProvenance(other.to_string())),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Or => "OR",
            Provenance::Ht => "HT",
            Provenance::Mt => "MT",
        }
    }
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which provenance pair a binary classifier separates. The first label is
/// the preferred ("more natural") class t₁.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Perspective {
    /// OR preferred over HT.
    HtOr,
    /// HT preferred over MT.
    MtHt,
    /// OR preferred over MT.
    MtOr,
}

impl Perspective {
    pub const ALL: [Perspective; 3] = [Perspective::HtOr, Perspective::MtHt, Perspective::MtOr];

    /// The preferred class t₁.
    pub fn preferred(&self) -> Provenance {
        match self {
            Perspective::HtOr => Provenance::Or,
            Perspective::MtHt => Provenance::Ht,
            Perspective::MtOr => Provenance::Or,
        }
    }

    /// The dispreferred class t₀.
    pub fn dispreferred(&self) -> Provenance {
        match self {
            Perspective::HtOr => Provenance::Ht,
            Perspective::MtHt => Provenance::Mt,
            Perspective::MtOr => Provenance::Mt,
        }
    }

    pub fn parse(s: &str) -> Option<Perspective> {
        match s {
            "HT-OR" | "ht-or" => Some(Perspective::HtOr),
            "MT-HT" | "mt-ht" => Some(Perspective::MtHt),
            "MT-OR" | "mt-or" => Some(Perspective::MtOr),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Perspective::HtOr => "HT-OR",
            Perspective::MtHt => "MT-HT",
            Perspective::MtOr => "MT-OR",
        }
    }
}

impl std::fmt::Display for Perspective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct Document {
    pub id: String,
    pub language: String,
    pub provenance: Provenance,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone)]
pub struct ParallelPair {
    pub source: Sentence,
    pub target: Sentence,
    pub book_id: String,
}

/// One item of a classifier dataset; `label` is true for the preferred
/// class t₁ of the perspective the set was built for.
#[derive(Debug, Clone)]
pub struct LabeledText {
    pub sentence: Sentence,
    pub label: bool,
}

/// Translates every pair's source with beam search and collects the outputs
/// as MT-labeled documents (one per book), dropping any output whose token
/// sequence is identical to the paired human translation.
pub fn synthesize_mt_corpus<S: crate::scalar::Scalar>(
    pairs: &[ParallelPair],
    model: &crate::seq2seq::Seq2SeqModel<S>,
    beam: usize,
    language: &str,
) -> Result<Vec<Document>, CorpusError> {
    if model.steps_trained() == 0 {
        return Err(CorpusError::UntrainedModel);
    }
    let mut by_book: std::collections::BTreeMap<String, Vec<Sentence>> =
        std::collections::BTreeMap::new();
    for pair in pairs {
        let hyp = model
            .decode_beam(&pair.source, beam)
            .map_err(|e| CorpusError::SynthesisDecode(e.to_string()))?;
        let sentence = model.ids_to_sentence(&hyp.ids);
        if sentence.tokens == pair.target.tokens {
            continue; // identical to the human translation
        }
        by_book.entry(pair.book_id.clone()).or_default().push(sentence);
    }
    Ok(by_book
        .into_iter()
        .map(|(book_id, sentences)| Document {
            id: format!("mt-{book_id}"),
            language: language.to_string(),
            provenance: Provenance::Mt,
            sentences,
        })
        .collect())
}

/// Builds a class-balanced binary dataset for one perspective by
/// down-sampling the larger provenance pool with a seeded shuffle.
pub fn make_classifier_dataset(
    perspective: Perspective,
    docs: &[Document],
    seed: u64,
) -> Result<Vec<LabeledText>, CorpusError> {
    let collect = |prov: Provenance| -> Vec<Sentence> {
        docs.iter()
            .filter(|d| d.provenance == prov)
            .flat_map(|d| d.sentences.iter().cloned())
            .collect()
    };
    let mut preferred = collect(perspective.preferred());
    let mut dispreferred = collect(perspective.dispreferred());
    if preferred.is_empty() {
        return Err(CorpusError::MissingPool(perspective.preferred()));
    }
    if dispreferred.is_empty() {
        return Err(CorpusError::MissingPool(perspective.dispreferred()));
    }
    let n = preferred.len().min(dispreferred.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    preferred.shuffle(&mut rng);
    dispreferred.shuffle(&mut rng);
    preferred.truncate(n);
    dispreferred.truncate(n);

    let mut out = Vec::with_capacity(2 * n);
    out.extend(preferred.into_iter().map(|sentence| LabeledText {
        sentence,
        label: true,
    }));
    out.extend(dispreferred.into_iter().map(|sentence| LabeledText {
        sentence,
        label: false,
    }));
    Ok(out)
}
