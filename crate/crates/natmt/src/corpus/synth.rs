//! Synthetic corpora for demos and tests.
//!
//! Two generators: a plain symbol-copy translation task, and a two-register
//! style task where every source has a "bland" and a "natural" target that
//! share all content words and differ only in a register marker token.

use rand::Rng;

use super::{Document, ParallelPair, Provenance, Sentence, Token};

const LETTERS: &[u8] = b"abcdefghijklmnopqrst";

/// Bland-register marker token (characters chosen outside the content alphabet).
pub const BLAND_MARKER: &str = "vq";
/// Natural-register marker token; same characters as the bland marker in the
/// opposite order, so register costs the content scorer very little.
pub const NATURAL_MARKER: &str = "qv";

#[derive(Debug, Clone)]
pub struct StyleTask {
    /// Number of content word types (at most 20).
    pub content_types: usize,
    pub min_words: usize,
    pub max_words: usize,
}

impl Default for StyleTask {
    fn default() -> Self {
        StyleTask {
            content_types: 20,
            min_words: 6,
            max_words: 10,
        }
    }
}

impl StyleTask {
    pub fn source_word(&self, i: usize) -> String {
        let c = LETTERS[i] as char;
        format!("s{c}{c}")
    }

    pub fn target_word(&self, i: usize) -> String {
        let c = LETTERS[i] as char;
        format!("{c}{c}{c}")
    }

    fn content(&self, rng: &mut impl Rng) -> Vec<usize> {
        let len = rng.gen_range(self.min_words..=self.max_words);
        (0..len).map(|_| rng.gen_range(0..self.content_types)).collect()
    }

    /// One pair whose target carries the natural marker with probability
    /// `natural_fraction`, otherwise the bland marker.
    pub fn pair(&self, natural_fraction: f64, book_id: &str, rng: &mut impl Rng) -> ParallelPair {
        let content = self.content(rng);
        let natural = rng.gen_bool(natural_fraction);
        let source = Sentence::from_tokens(
            content
                .iter()
                .map(|&i| Token::new(self.source_word(i)))
                .collect(),
        );
        let target = self.render_target(&content, natural);
        ParallelPair {
            source,
            target,
            book_id: book_id.to_string(),
        }
    }

    pub fn render_target(&self, content: &[usize], natural: bool) -> Sentence {
        let marker = if natural { NATURAL_MARKER } else { BLAND_MARKER };
        let mut tokens: Vec<Token> = content
            .iter()
            .map(|&i| Token::new(self.target_word(i)))
            .collect();
        tokens.push(Token::new(marker));
        Sentence::from_tokens(tokens)
    }

    pub fn pairs(
        &self,
        n: usize,
        natural_fraction: f64,
        book_id: &str,
        rng: &mut impl Rng,
    ) -> Vec<ParallelPair> {
        (0..n).map(|_| self.pair(natural_fraction, book_id, rng)).collect()
    }

    /// Register-labeled monolingual pools for classifier training: bland
    /// sentences as an MT-provenance document, natural ones as HT.
    pub fn register_docs(&self, n_each: usize, rng: &mut impl Rng) -> (Document, Document) {
        let mut bland = Vec::with_capacity(n_each);
        let mut natural = Vec::with_capacity(n_each);
        for _ in 0..n_each {
            bland.push(self.render_target(&self.content(rng), false));
            natural.push(self.render_target(&self.content(rng), true));
        }
        (
            Document {
                id: "register-bland".to_string(),
                language: "syn".to_string(),
                provenance: Provenance::Mt,
                sentences: bland,
            },
            Document {
                id: "register-natural".to_string(),
                language: "syn".to_string(),
                provenance: Provenance::Ht,
                sentences: natural,
            },
        )
    }
}

/// Identity translation over single-letter symbols.
pub fn copy_pairs(
    n_symbols: usize,
    n: usize,
    min_len: usize,
    max_len: usize,
    book_id: &str,
    rng: &mut impl Rng,
) -> Vec<ParallelPair> {
    assert!(n_symbols <= LETTERS.len());
    (0..n)
        .map(|_| {
            let len = rng.gen_range(min_len..=max_len);
            let tokens: Vec<Token> = (0..len)
                .map(|_| Token::new((LETTERS[rng.gen_range(0..n_symbols)] as char).to_string()))
                .collect();
            ParallelPair {
                source: Sentence::from_tokens(tokens.clone()),
                target: Sentence::from_tokens(tokens),
                book_id: book_id.to_string(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn style_registers_share_content_and_differ_in_marker() {
        let task = StyleTask::default();
        let content = vec![0, 3, 7, 1, 2, 5];
        let bland = task.render_target(&content, false);
        let natural = task.render_target(&content, true);
        assert_eq!(bland.tokens[..content.len()], natural.tokens[..content.len()]);
        assert_eq!(bland.tokens.last().unwrap().as_str(), BLAND_MARKER);
        assert_eq!(natural.tokens.last().unwrap().as_str(), NATURAL_MARKER);
    }

    #[test]
    fn copy_pairs_are_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in copy_pairs(10, 20, 3, 8, "b", &mut rng) {
            assert_eq!(p.source.tokens, p.target.tokens);
            assert!(p.source.len() >= 3 && p.source.len() <= 8);
        }
    }
}
