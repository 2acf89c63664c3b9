//! Token ↔ id mapping with fixed special ids.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{CorpusError, Sentence, Token};

pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;
pub const TAG_ORIG_ID: usize = 4;
pub const TAG_TRAN_ID: usize = 5;

const SPECIALS: [&str; 6] = ["<pad>", "<bos>", "<eos>", "<unk>", "<orig>", "<tran>"];

/// Bijective token↔id map; ids 0..=5 are the fixed specials.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from token frequencies: every token seen at least
    /// `min_freq` times gets an id, ordered by descending frequency then
    /// lexicographically (deterministic across runs).
    pub fn build(corpus: &[Sentence], min_freq: usize) -> Vocabulary {
        assert!(min_freq >= 1, "min_freq must be >= 1");
        let mut freq: HashMap<&str, usize> = HashMap::new();
        for sent in corpus {
            for tok in &sent.tokens {
                *freq.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = freq
            .into_iter()
            .filter(|&(_, n)| n >= min_freq)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(kept.into_iter().map(|(t, _)| t.to_string()));
        Vocabulary::from_tokens(tokens)
    }

    pub(crate) fn from_token_list(tokens: Vec<String>) -> Vocabulary {
        Vocabulary::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Vocabulary {
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, ids }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Id of a token; unknown tokens map to `UNK_ID`.
    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn encode(&self, sentence: &Sentence) -> Vec<usize> {
        sentence.tokens.iter().map(|t| self.id(t.as_str())).collect()
    }

    /// Decodes ids to a sentence, dropping special tokens.
    pub fn decode(&self, ids: &[usize]) -> Sentence {
        let tokens = ids
            .iter()
            .filter(|&&id| id >= SPECIALS.len())
            .map(|&id| Token::new(self.tokens[id].clone()))
            .collect();
        Sentence::from_tokens(tokens)
    }

    /// One token per line; the line number is the id.
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let io_err = |source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
        for t in &self.tokens {
            writeln!(f, "{t}").map_err(io_err)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocabulary, CorpusError> {
        let io_err = |source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        };
        let f = BufReader::new(std::fs::File::open(path).map_err(io_err)?);
        let mut tokens = Vec::new();
        for line in f.lines() {
            tokens.push(line.map_err(io_err)?);
        }
        Ok(Vocabulary::from_tokens(tokens))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    #[test]
    fn below_cutoff_tokens_encode_to_unk() {
        let corpus = vec![tokenize("a a b", true)];
        let v = Vocabulary::build(&corpus, 2);
        assert_eq!(v.len(), 7); // 6 specials + "a"
        assert_eq!(v.id("a"), 6);
        assert_eq!(v.id("b"), UNK_ID);
    }

    #[test]
    fn min_freq_one_keeps_everything() {
        let corpus = vec![tokenize("a b", true)];
        let v = Vocabulary::build(&corpus, 1);
        assert_eq!(v.len(), 8);
        assert!(v.contains("a") && v.contains("b"));
    }

    #[test]
    fn empty_corpus_gives_specials_only() {
        let v = Vocabulary::build(&[], 1);
        assert_eq!(v.len(), 6);
        assert_eq!(v.token(BOS_ID), "<bos>");
        assert_eq!(v.token(TAG_ORIG_ID), "<orig>");
        assert_eq!(v.token(TAG_TRAN_ID), "<tran>");
    }

    #[test]
    fn ids_are_frequency_then_lexicographic() {
        let corpus = vec![tokenize("b b c a a", true)];
        let v = Vocabulary::build(&corpus, 1);
        // a and b both occur twice; a wins lexicographically
        assert_eq!(v.id("a"), 6);
        assert_eq!(v.id("b"), 7);
        assert_eq!(v.id("c"), 8);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let corpus = vec![tokenize("x y z z", true)];
        let v = Vocabulary::build(&corpus, 1);
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(v, loaded);
    }

    #[test]
    fn decode_strips_specials() {
        let corpus = vec![tokenize("hi there", true)];
        let v = Vocabulary::build(&corpus, 1);
        let ids = vec![BOS_ID, v.id("hi"), v.id("there"), EOS_ID];
        assert_eq!(v.decode(&ids).raw, "hi there");
    }
}
