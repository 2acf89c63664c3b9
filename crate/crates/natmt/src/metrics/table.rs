//! Lexical translation table built by expectation-maximization word
//! alignment, and the translation-option metrics PTF and CDU on top of it.

use std::collections::{BTreeMap, HashMap};

use super::MetricsError;
use crate::corpus::{ParallelPair, Sentence};

#[derive(Debug, Clone)]
pub struct TableConfig {
    /// EM rounds over the alignment probabilities; 0 keeps the uniform
    /// initialization (pure co-occurrence counting).
    pub em_iterations: usize,
    /// Minimum alignment posterior p(option | source) for a target word to
    /// count as a translation option.
    pub posterior_floor: f64,
    /// A relevant source word occurs at least this often in the training
    /// corpus...
    pub min_source_freq: usize,
    /// ...and has at least this many distinct translation options.
    pub min_options: usize,
}

impl Default for TableConfig {
    fn default() -> Self {
        TableConfig {
            em_iterations: 5,
            posterior_floor: 0.1,
            min_source_freq: 10,
            min_options: 2,
        }
    }
}

/// Expected-count translation options per source word.
#[derive(Debug, Clone)]
pub struct LexicalTranslationTable {
    options: BTreeMap<String, BTreeMap<String, f64>>,
    source_freq: BTreeMap<String, usize>,
    config: TableConfig,
}

impl LexicalTranslationTable {
    pub fn options(&self, source: &str) -> Option<&BTreeMap<String, f64>> {
        self.options.get(source)
    }

    pub fn source_freq(&self, source: &str) -> usize {
        self.source_freq.get(source).copied().unwrap_or(0)
    }

    pub fn is_relevant(&self, source: &str) -> bool {
        self.source_freq(source) >= self.config.min_source_freq
            && self.options(source).map_or(0, BTreeMap::len) >= self.config.min_options
    }

    pub fn relevant_sources(&self) -> Vec<&str> {
        self.options
            .keys()
            .map(String::as_str)
            .filter(|s| self.is_relevant(s))
            .collect()
    }

    /// Option with the highest expected count (ties lexicographic).
    pub fn most_frequent_option(&self, source: &str) -> Option<&str> {
        let opts = self.options(source)?;
        opts.iter()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then_with(|| b.0.cmp(a.0)))
            .map(|(k, _)| k.as_str())
    }
}

/// Builds the table with IBM-style lexical EM: uniform initialization over
/// co-occurring words, `em_iterations` rounds, then a final expected-count
/// pass. Options are target words whose alignment posterior reaches the
/// configured floor. Fully deterministic.
pub fn build_translation_table(
    pairs: &[ParallelPair],
    config: TableConfig,
) -> Result<LexicalTranslationTable, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    // intern words
    let mut src_ids: HashMap<&str, u32> = HashMap::new();
    let mut src_names: Vec<&str> = Vec::new();
    let mut tgt_ids: HashMap<&str, u32> = HashMap::new();
    let mut tgt_names: Vec<&str> = Vec::new();
    let mut sentences: Vec<(Vec<u32>, Vec<u32>)> = Vec::with_capacity(pairs.len());
    for p in pairs {
        let s: Vec<u32> = p
            .source
            .tokens
            .iter()
            .map(|t| intern(t.as_str(), &mut src_ids, &mut src_names))
            .collect();
        let t: Vec<u32> = p
            .target
            .tokens
            .iter()
            .map(|t| intern(t.as_str(), &mut tgt_ids, &mut tgt_names))
            .collect();
        sentences.push((s, t));
    }

    let n_src = src_names.len();
    // t(target | source), restricted to co-occurring pairs; the uniform
    // initialization is the constant 1.0 (scale cancels in the E-step)
    let mut t_prob: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); n_src];
    for (s, t) in &sentences {
        for &si in s {
            let row = &mut t_prob[si as usize];
            for &tj in t {
                row.entry(tj).or_insert(1.0);
            }
        }
    }

    let mut counts: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); n_src];
    for round in 0..=config.em_iterations {
        counts.iter_mut().for_each(BTreeMap::clear);
        for (s, t) in &sentences {
            for &tj in t {
                let denom: f64 = s.iter().map(|&si| t_prob[si as usize][&tj]).sum();
                for &si in s {
                    let c = t_prob[si as usize][&tj] / denom;
                    *counts[si as usize].entry(tj).or_insert(0.0) += c;
                }
            }
        }
        if round == config.em_iterations {
            break; // final pass gives the expected counts for the table
        }
        for (row_c, row_t) in counts.iter().zip(t_prob.iter_mut()) {
            let total: f64 = row_c.values().sum();
            for (tj, p) in row_t.iter_mut() {
                *p = row_c.get(tj).copied().unwrap_or(0.0) / total;
            }
        }
    }

    let mut source_freq: BTreeMap<String, usize> = BTreeMap::new();
    for (s, _) in &sentences {
        for &si in s {
            *source_freq.entry(src_names[si as usize].to_string()).or_insert(0) += 1;
        }
    }

    let mut options = BTreeMap::new();
    for (si, row) in counts.iter().enumerate() {
        let total: f64 = row.values().sum();
        if total <= 0.0 {
            continue;
        }
        let kept: BTreeMap<String, f64> = row
            .iter()
            .filter(|(_, &c)| c / total >= config.posterior_floor)
            .map(|(&tj, &c)| (tgt_names[tj as usize].to_string(), c))
            .collect();
        if !kept.is_empty() {
            options.insert(src_names[si].to_string(), kept);
        }
    }
    Ok(LexicalTranslationTable {
        options,
        source_freq,
        config,
    })
}

fn intern<'a>(word: &'a str, ids: &mut HashMap<&'a str, u32>, names: &mut Vec<&'a str>) -> u32 {
    *ids.entry(word).or_insert_with(|| {
        names.push(word);
        (names.len() - 1) as u32
    })
}

/// For one occurrence of a source word, the option chosen in the output
/// sentence: the co-present option with the highest expected count.
fn chosen_option<'t>(
    table: &'t LexicalTranslationTable,
    source_word: &str,
    output: &Sentence,
) -> Option<&'t str> {
    let opts = table.options(source_word)?;
    output
        .tokens
        .iter()
        .filter_map(|t| opts.get_key_value(t.as_str()))
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then_with(|| b.0.cmp(a.0)))
        .map(|(k, _)| k.as_str())
}

fn per_word_choices<'t>(
    sources: &[Sentence],
    outputs: &[Sentence],
    table: &'t LexicalTranslationTable,
) -> Result<BTreeMap<&'t str, BTreeMap<&'t str, usize>>, MetricsError> {
    if sources.len() != outputs.len() {
        return Err(MetricsError::LengthMismatch {
            hypotheses: outputs.len(),
            references: sources.len(),
        });
    }
    if table.options.is_empty() {
        return Err(MetricsError::EmptyTable);
    }
    let mut choices: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
    for (src, out) in sources.iter().zip(outputs) {
        for tok in &src.tokens {
            let Some((word, _)) = table.options.get_key_value(tok.as_str()) else {
                continue;
            };
            if !table.is_relevant(word) {
                continue;
            }
            if let Some(opt) = chosen_option(table, word, out) {
                *choices
                    .entry(word.as_str())
                    .or_default()
                    .entry(opt)
                    .or_insert(0) += 1;
            }
        }
    }
    if choices.is_empty() {
        return Err(MetricsError::NoRelevantWords);
    }
    Ok(choices)
}

/// Primary-translation frequency: per relevant source word, the fraction of
/// its occurrences translated with its globally most frequent option,
/// averaged over words. Lower means more varied translations.
pub fn ptf(
    sources: &[Sentence],
    outputs: &[Sentence],
    table: &LexicalTranslationTable,
) -> Result<f64, MetricsError> {
    let choices = per_word_choices(sources, outputs, table)?;
    let mut total = 0.0;
    let mut words = 0usize;
    for (word, opts) in &choices {
        let top = table.most_frequent_option(word).expect("relevant word has options");
        let occurrences: usize = opts.values().sum();
        let matches = opts.get(top).copied().unwrap_or(0);
        total += matches as f64 / occurrences as f64;
        words += 1;
    }
    Ok(total / words as f64)
}

/// Cosine distance from uniform option usage: per relevant source word, the
/// cosine similarity between its output option-count vector and the all-ones
/// vector, averaged over words. 1.0 means every option used equally often.
pub fn cdu(
    sources: &[Sentence],
    outputs: &[Sentence],
    table: &LexicalTranslationTable,
) -> Result<f64, MetricsError> {
    let choices = per_word_choices(sources, outputs, table)?;
    let mut total = 0.0;
    let mut words = 0usize;
    for (word, used) in &choices {
        let opts = table.options(word).expect("relevant word has options");
        let counts: Vec<f64> = opts
            .keys()
            .map(|o| used.get(o.as_str()).copied().unwrap_or(0) as f64)
            .collect();
        let sum: f64 = counts.iter().sum();
        let norm: f64 = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        total += sum / (norm * (counts.len() as f64).sqrt());
        words += 1;
    }
    if words == 0 {
        return Err(MetricsError::NoRelevantWords);
    }
    Ok(total / words as f64)
}
