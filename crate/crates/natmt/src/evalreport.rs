//! Inference-time post-processing and system-level evaluation: metric
//! reports per book, classification rates, and training-curve files.

use std::collections::HashSet;

use thiserror::Error;

use crate::align::AlignEvalPoint;
use crate::classifier::NaturalnessClassifier;
use crate::corpus::{tokenize, ParallelBook, Perspective, Provenance, Sentence};
use crate::metrics::{
    b1, bleu, cdu, mtld, ptf, ttr, yules_i, LexicalTranslationTable, MetricsError,
};
use crate::reward::ContentScorer;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no outputs to evaluate")]
    EmptyOutputs,
    #[error("missing output for book {0}")]
    MissingBook(String),
    #[error("book {book}: {hypotheses} output sentences vs {references} references")]
    BookSizeMismatch {
        book: String,
        hypotheses: usize,
        references: usize,
    },
    #[error("aspect {target} is not a class of the {perspective} classifier")]
    WrongAspect {
        target: Provenance,
        perspective: Perspective,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Punctuation characters whose consecutive repeats collapse in
/// post-processing.
pub const DEFAULT_COLLAPSE_SET: [char; 8] = ['.', ',', '!', '?', ';', ':', '…', '-'];

/// Collapses every run of two or more identical punctuation characters to a
/// single one; all other characters pass through untouched. Idempotent.
pub fn postprocess_output(raw: &str) -> String {
    postprocess_output_with(raw, &DEFAULT_COLLAPSE_SET)
}

pub fn postprocess_output_with(raw: &str, collapse: &[char]) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut prev: Option<char> = None;
    for ch in raw.chars() {
        if prev == Some(ch) && collapse.contains(&ch) {
            continue;
        }
        out.push(ch);
        prev = Some(ch);
    }
    out
}

/// Translated documents of one system, aligned with the test books.
#[derive(Debug, Clone)]
pub struct SystemOutput {
    pub name: String,
    pub books: Vec<BookOutput>,
    pub settings: GenerationSettings,
}

#[derive(Debug, Clone)]
pub struct BookOutput {
    pub book_id: String,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationSettings {
    pub beam: usize,
    pub checkpoint_step: u64,
}

/// Rate (percentage) at which the classifier assigns output sentences to the
/// target aspect, per book then averaged.
pub fn classification_rate<S: Scalar>(
    clf: &NaturalnessClassifier<S>,
    books: &[BookOutput],
    target: Provenance,
) -> Result<f64, EvalError> {
    if books.is_empty() || books.iter().all(|b| b.sentences.is_empty()) {
        return Err(EvalError::EmptyOutputs);
    }
    let perspective = clf.perspective();
    let expect_preferred = if target == perspective.preferred() {
        true
    } else if target == perspective.dispreferred() {
        false
    } else {
        return Err(EvalError::WrongAspect {
            target,
            perspective,
        });
    };
    let mut rates = Vec::with_capacity(books.len());
    for book in books {
        if book.sentences.is_empty() {
            continue;
        }
        let hits = book
            .sentences
            .iter()
            .filter(|s| clf.predict(s) == expect_preferred)
            .count();
        rates.push(100.0 * hits as f64 / book.sentences.len() as f64);
    }
    Ok(rates.iter().sum::<f64>() / rates.len() as f64)
}

/// The up-to-three perspective classifiers available for evaluation.
#[derive(Default)]
pub struct PerspectiveClassifiers<S: Scalar> {
    pub ht_or: Option<NaturalnessClassifier<S>>,
    pub mt_ht: Option<NaturalnessClassifier<S>>,
    pub mt_or: Option<NaturalnessClassifier<S>>,
}

impl<S: Scalar> PerspectiveClassifiers<S> {
    pub fn get(&self, p: Perspective) -> Option<&NaturalnessClassifier<S>> {
        match p {
            Perspective::HtOr => self.ht_or.as_ref(),
            Perspective::MtHt => self.mt_ht.as_ref(),
            Perspective::MtOr => self.mt_or.as_ref(),
        }
    }

    pub fn set(&mut self, clf: NaturalnessClassifier<S>) {
        match clf.perspective() {
            Perspective::HtOr => self.ht_or = Some(clf),
            Perspective::MtHt => self.mt_ht = Some(clf),
            Perspective::MtOr => self.mt_or = Some(clf),
        }
    }
}

/// One report row; `None` marks a value that is undefined or not applicable
/// (rendered as NA).
#[derive(Debug, Clone, PartialEq)]
pub struct BookRow {
    pub book_id: String,
    pub bleu: Option<f64>,
    /// Surrogate content score × 100.
    pub content: Option<f64>,
    pub ht_or: Option<f64>,
    pub mt_ht: Option<f64>,
    pub mt_or: Option<f64>,
    pub ttr: Option<f64>,
    pub yules_i: Option<f64>,
    pub mtld: Option<f64>,
    pub b1: Option<f64>,
    pub ptf: Option<f64>,
    pub cdu: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MetricReport {
    pub system: String,
    /// Corpus-level row for the human references, when requested.
    pub reference: Option<BookRow>,
    pub rows: Vec<BookRow>,
    pub avg: BookRow,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Collapse repeated punctuation in outputs before scoring (the raw
    /// variant is kept for inspecting unprocessed behavior).
    pub postprocess: bool,
    pub mtld_threshold: f64,
    /// Frequent-word list for B1 (empty disables the column).
    pub top_words: HashSet<String>,
    pub include_reference_row: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            postprocess: true,
            mtld_threshold: crate::metrics::MTLD_THRESHOLD,
            top_words: HashSet::new(),
            include_reference_row: true,
        }
    }
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let some: Vec<f64> = values.flatten().collect();
    if some.is_empty() {
        None
    } else {
        Some(some.iter().sum::<f64>() / some.len() as f64)
    }
}

fn average_row(id: &str, rows: &[BookRow]) -> BookRow {
    BookRow {
        book_id: id.to_string(),
        bleu: mean_of(rows.iter().map(|r| r.bleu)),
        content: mean_of(rows.iter().map(|r| r.content)),
        ht_or: mean_of(rows.iter().map(|r| r.ht_or)),
        mt_ht: mean_of(rows.iter().map(|r| r.mt_ht)),
        mt_or: mean_of(rows.iter().map(|r| r.mt_or)),
        ttr: mean_of(rows.iter().map(|r| r.ttr)),
        yules_i: mean_of(rows.iter().map(|r| r.yules_i)),
        mtld: mean_of(rows.iter().map(|r| r.mtld)),
        b1: mean_of(rows.iter().map(|r| r.b1)),
        ptf: mean_of(rows.iter().map(|r| r.ptf)),
        cdu: mean_of(rows.iter().map(|r| r.cdu)),
    }
}

#[allow(clippy::too_many_arguments)]
fn book_metrics<S: Scalar>(
    book_id: &str,
    sources: &[Sentence],
    references: &[Sentence],
    hypotheses: &[Sentence],
    classifiers: &PerspectiveClassifiers<S>,
    scorer: Option<&dyn ContentScorer<S>>,
    table: Option<&LexicalTranslationTable>,
    cfg: &EvalConfig,
) -> Result<BookRow, EvalError> {
    let stream: Vec<_> = hypotheses
        .iter()
        .flat_map(|s| s.tokens.iter().cloned())
        .collect();

    let bleu_score = scorer.is_some().then(|| bleu(hypotheses, references)).transpose()?;
    let content = scorer.map(|sc| {
        let total: f64 = sources
            .iter()
            .zip(references)
            .zip(hypotheses)
            .map(|((x, y), h)| sc.score(x, y, h).as_f64())
            .sum();
        100.0 * total / hypotheses.len().max(1) as f64
    });

    let rate = |p: Perspective| -> Option<f64> {
        classifiers.get(p).map(|clf| {
            let hits = hypotheses.iter().filter(|s| clf.predict(s)).count();
            100.0 * hits as f64 / hypotheses.len().max(1) as f64
        })
    };

    let ptf_cdu = match table {
        Some(t) => {
            let p = ptf(sources, hypotheses, t).ok();
            let c = cdu(sources, hypotheses, t).ok();
            (p, c)
        }
        None => (None, None),
    };

    Ok(BookRow {
        book_id: book_id.to_string(),
        bleu: bleu_score,
        content,
        ht_or: rate(Perspective::HtOr),
        mt_ht: rate(Perspective::MtHt),
        mt_or: rate(Perspective::MtOr),
        ttr: ttr(&stream).ok(),
        yules_i: yules_i(&stream).ok().flatten(),
        mtld: mtld(&stream, cfg.mtld_threshold).ok(),
        b1: (!cfg.top_words.is_empty())
            .then(|| b1(&stream, &cfg.top_words).ok())
            .flatten(),
        ptf: ptf_cdu.0,
        cdu: ptf_cdu.1,
    })
}

/// Full system evaluation: BLEU and content columns, the available
/// classification rates, and the lexical-diversity battery, per book and
/// averaged. Outputs must cover every test book with matching sentence
/// counts.
pub fn evaluate_system<S: Scalar>(
    output: &SystemOutput,
    test_books: &[ParallelBook],
    classifiers: &PerspectiveClassifiers<S>,
    scorer: &dyn ContentScorer<S>,
    table: Option<&LexicalTranslationTable>,
    cfg: &EvalConfig,
) -> Result<MetricReport, EvalError> {
    if test_books.is_empty() {
        return Err(EvalError::EmptyOutputs);
    }
    let mut rows = Vec::with_capacity(test_books.len());
    let mut ref_rows = Vec::with_capacity(test_books.len());
    for book in test_books {
        let out = output
            .books
            .iter()
            .find(|b| b.book_id == book.book_id)
            .ok_or_else(|| EvalError::MissingBook(book.book_id.clone()))?;
        if out.sentences.len() != book.pairs.len() {
            return Err(EvalError::BookSizeMismatch {
                book: book.book_id.clone(),
                hypotheses: out.sentences.len(),
                references: book.pairs.len(),
            });
        }
        let sources: Vec<Sentence> = book.pairs.iter().map(|p| p.source.clone()).collect();
        let references: Vec<Sentence> = book.pairs.iter().map(|p| p.target.clone()).collect();
        let hypotheses: Vec<Sentence> = if cfg.postprocess {
            out.sentences
                .iter()
                .map(|s| tokenize(&postprocess_output(&s.raw), false))
                .collect()
        } else {
            out.sentences.clone()
        };
        rows.push(book_metrics(
            &book.book_id,
            &sources,
            &references,
            &hypotheses,
            classifiers,
            Some(scorer),
            table,
            cfg,
        )?);
        if cfg.include_reference_row {
            ref_rows.push(book_metrics(
                &book.book_id,
                &sources,
                &references,
                &references,
                classifiers,
                None,
                table,
                cfg,
            )?);
        }
    }
    let avg = average_row("avg", &rows);
    let reference = cfg
        .include_reference_row
        .then(|| average_row("human-translation", &ref_rows));
    Ok(MetricReport {
        system: output.name.clone(),
        reference,
        rows,
        avg,
    })
}

fn fmt(v: Option<f64>, decimals: usize) -> String {
    match v {
        Some(x) => format!("{x:.decimals$}"),
        None => "NA".to_string(),
    }
}

fn row_tsv(row: &BookRow) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
        row.book_id,
        fmt(row.bleu, 2),
        fmt(row.content, 2),
        fmt(row.ht_or, 2),
        fmt(row.mt_ht, 2),
        fmt(row.mt_or, 2),
        fmt(row.ttr, 3),
        fmt(row.yules_i, 3),
        fmt(row.mtld, 1),
        fmt(row.b1, 3),
        fmt(row.ptf, 3),
        fmt(row.cdu, 3),
    )
}

/// Tab-separated report: accuracy block, classification block, diversity
/// block, one row per book plus the `avg` row (and the human-translation
/// reference row when present). Down-arrow flags mark lower-is-better
/// columns.
pub fn report_to_tsv(report: &MetricReport) -> String {
    let mut out = String::new();
    out.push_str("# system: ");
    out.push_str(&report.system);
    out.push('\n');
    out.push_str("book\tbleu\tcontent_chrf\tht_or\tmt_ht\tmt_or\tttr\tyules_i\tmtld\tb1↓\tptf↓\tcdu↓\n");
    if let Some(r) = &report.reference {
        out.push_str(&row_tsv(r));
    }
    for row in &report.rows {
        out.push_str(&row_tsv(row));
    }
    out.push_str(&row_tsv(&report.avg));
    out
}

/// One evaluated checkpoint on the training curve (step 0 is the base
/// model). The rate of the aligned perspective fills its column; the
/// others are NA unless separately evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub step: u64,
    pub ht_or: Option<f64>,
    pub mt_ht: Option<f64>,
    pub mt_or: Option<f64>,
    pub mtld: f64,
    pub content: f64,
    pub hm: f64,
}

pub fn curve_from_align(evals: &[AlignEvalPoint], perspective: Perspective) -> Vec<CurvePoint> {
    evals
        .iter()
        .map(|e| {
            let mut point = CurvePoint {
                step: e.step,
                ht_or: None,
                mt_ht: None,
                mt_or: None,
                mtld: e.mtld,
                content: e.mean_content,
                hm: e.hm,
            };
            match perspective {
                Perspective::HtOr => point.ht_or = Some(e.class_rate),
                Perspective::MtHt => point.mt_ht = Some(e.class_rate),
                Perspective::MtOr => point.mt_or = Some(e.class_rate),
            }
            point
        })
        .collect()
}

/// Curve file: tab-separated (step, ht_or, mt_ht, mt_or, mtld, content, hm).
pub fn curves_to_tsv(points: &[CurvePoint]) -> String {
    let mut out = String::from("step\tht_or\tmt_ht\tmt_or\tmtld\tcontent\thm\n");
    for p in points {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\n",
            p.step,
            fmt(p.ht_or, 4),
            fmt(p.mt_ht, 4),
            fmt(p.mt_or, 4),
            p.mtld,
            p.content,
            p.hm,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::FeatureSpec;
    use crate::corpus::Split;
    use crate::reward::{overall_reward, CharNgramF};

    #[test]
    fn repeated_periods_collapse_byte_exactly() {
        assert_eq!(
            postprocess_output("…verlaten dingen............."),
            "…verlaten dingen."
        );
        assert_eq!(postprocess_output("Hello!!"), "Hello!");
        assert_eq!(postprocess_output("a.b.c"), "a.b.c");
    }

    #[test]
    fn mixed_runs_only_collapse_identical_characters() {
        assert_eq!(postprocess_output("wat?!"), "wat?!");
        assert_eq!(postprocess_output("wat??!!"), "wat?!");
        assert_eq!(postprocess_output("aa..bb,,"), "aa.bb,");
    }

    #[test]
    fn postprocess_is_idempotent() {
        for s in ["x....", "a,,b..c", "…………", "plain text"] {
            let once = postprocess_output(s);
            assert_eq!(postprocess_output(&once), once);
        }
    }

    #[test]
    fn non_punctuation_repeats_are_preserved() {
        assert_eq!(postprocess_output("aa bb cc"), "aa bb cc");
        assert_eq!(postprocess_output("heel    goed"), "heel    goed");
    }

    fn constant_clf(perspective: Perspective, logit: f64) -> NaturalnessClassifier<f64> {
        let spec = FeatureSpec {
            hash_bits: 8,
            ..FeatureSpec::default()
        };
        NaturalnessClassifier::with_weights(
            perspective,
            spec.clone(),
            vec![0.0; spec.space_size()],
            logit,
        )
    }

    fn books_of(sentences: &[&str]) -> Vec<BookOutput> {
        vec![BookOutput {
            book_id: "b1".into(),
            sentences: sentences.iter().map(|s| tokenize(s, true)).collect(),
        }]
    }

    #[test]
    fn constant_half_classifier_rate_depends_on_target_aspect() {
        let clf = constant_clf(Perspective::HtOr, 0.0); // score 0.5 → predicts t₁
        let books = books_of(&["een zin", "nog een"]);
        let or_rate = classification_rate(&clf, &books, Provenance::Or).unwrap();
        let ht_rate = classification_rate(&clf, &books, Provenance::Ht).unwrap();
        assert_eq!(or_rate, 100.0);
        assert_eq!(ht_rate, 0.0);
    }

    #[test]
    fn wrong_aspect_is_rejected() {
        let clf = constant_clf(Perspective::HtOr, 0.0);
        let books = books_of(&["zin"]);
        assert!(matches!(
            classification_rate(&clf, &books, Provenance::Mt),
            Err(EvalError::WrongAspect { .. })
        ));
    }

    #[test]
    fn empty_outputs_error() {
        let clf = constant_clf(Perspective::MtHt, 0.0);
        assert!(matches!(
            classification_rate(&clf, &[], Provenance::Ht),
            Err(EvalError::EmptyOutputs)
        ));
    }

    fn toy_book(book_id: &str, lines: &[(&str, &str)]) -> ParallelBook {
        ParallelBook {
            book_id: book_id.into(),
            split: Split::Test,
            provenance: Provenance::Ht,
            pairs: lines
                .iter()
                .map(|(s, t)| crate::corpus::ParallelPair {
                    source: tokenize(s, true),
                    target: tokenize(t, true),
                    book_id: book_id.into(),
                })
                .collect(),
        }
    }

    fn identity_output(name: &str, books: &[ParallelBook]) -> SystemOutput {
        SystemOutput {
            name: name.into(),
            books: books
                .iter()
                .map(|b| BookOutput {
                    book_id: b.book_id.clone(),
                    sentences: b.pairs.iter().map(|p| p.target.clone()).collect(),
                })
                .collect(),
            settings: GenerationSettings {
                beam: 1,
                checkpoint_step: 0,
            },
        }
    }

    #[test]
    fn references_evaluated_against_themselves_max_out() {
        let books = vec![toy_book(
            "b1",
            &[("a b", "x y z"), ("c d", "w v u t")],
        )];
        let output = identity_output("identity", &books);
        let report = evaluate_system(
            &output,
            &books,
            &PerspectiveClassifiers::<f64>::default(),
            &CharNgramF::default(),
            None,
            &EvalConfig::default(),
        )
        .unwrap();
        assert_eq!(report.rows[0].bleu, Some(100.0));
        assert_eq!(report.rows[0].content, Some(100.0));
        // single book: per-book row equals the avg row apart from the id
        let mut avg = report.avg.clone();
        avg.book_id = report.rows[0].book_id.clone();
        assert_eq!(avg, report.rows[0]);
    }

    #[test]
    fn missing_book_is_named() {
        let books = vec![toy_book("b1", &[("a", "x")]), toy_book("b2", &[("b", "y")])];
        let mut output = identity_output("sys", &books);
        output.books.pop();
        let err = evaluate_system(
            &output,
            &books,
            &PerspectiveClassifiers::<f64>::default(),
            &CharNgramF::default(),
            None,
            &EvalConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::MissingBook(ref b) if b == "b2"));
    }

    #[test]
    fn report_header_and_flags_match_the_declared_format() {
        let books = vec![toy_book("b1", &[("a b", "x y z")])];
        let output = identity_output("sys", &books);
        let report = evaluate_system(
            &output,
            &books,
            &PerspectiveClassifiers::<f64>::default(),
            &CharNgramF::default(),
            None,
            &EvalConfig::default(),
        )
        .unwrap();
        let tsv = report_to_tsv(&report);
        let mut lines = tsv.lines();
        assert_eq!(lines.next(), Some("# system: sys"));
        assert_eq!(
            lines.next(),
            Some("book\tbleu\tcontent_chrf\tht_or\tmt_ht\tmt_or\tttr\tyules_i\tmtld\tb1↓\tptf↓\tcdu↓")
        );
        // reference row, book row, avg row
        let rest: Vec<&str> = lines.collect();
        assert_eq!(rest.len(), 3);
        assert!(rest[0].starts_with("human-translation\tNA\tNA"));
        assert!(rest[2].starts_with("avg\t"));
    }

    #[test]
    fn averages_are_arithmetic_means_of_books() {
        let books = vec![
            toy_book("b1", &[("a b", "x y z"), ("c", "u v")]),
            toy_book("b2", &[("d e", "p q r s")]),
        ];
        let output = identity_output("sys", &books);
        let report = evaluate_system(
            &output,
            &books,
            &PerspectiveClassifiers::<f64>::default(),
            &CharNgramF::default(),
            None,
            &EvalConfig::default(),
        )
        .unwrap();
        let mean = |f: fn(&BookRow) -> Option<f64>| {
            (f(&report.rows[0]).unwrap() + f(&report.rows[1]).unwrap()) / 2.0
        };
        assert!((report.avg.ttr.unwrap() - mean(|r| r.ttr)).abs() < 1e-9);
        assert!((report.avg.mtld.unwrap() - mean(|r| r.mtld)).abs() < 1e-9);
        assert!((report.avg.bleu.unwrap() - mean(|r| r.bleu)).abs() < 1e-9);
    }

    #[test]
    fn curve_points_carry_hand_computed_harmonic_mean() {
        let evals = vec![AlignEvalPoint {
            step: 0,
            class_rate: 0.6,
            mean_content: 0.8,
            mtld: 12.0,
            hm: overall_reward(0.6, 0.8),
        }];
        let points = curve_from_align(&evals, Perspective::MtHt);
        assert!((points[0].hm - 0.685714285714).abs() < 1e-9);
        assert_eq!(points[0].mt_ht, Some(0.6));
        assert_eq!(points[0].ht_or, None);
        let tsv = curves_to_tsv(&points);
        assert!(tsv.starts_with("step\tht_or\tmt_ht\tmt_or\tmtld\tcontent\thm\n"));
        assert!(tsv.contains("0\tNA\t0.6000\tNA\t12.0000\t0.8000\t0.6857\n"));
    }

    #[test]
    fn zero_rate_gives_zero_harmonic_mean() {
        assert_eq!(overall_reward(0.0, 0.9), 0.0);
    }
}
