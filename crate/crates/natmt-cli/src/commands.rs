//! Subcommand implementations. Every run takes an exclusive lock on its
//! output directory, writes only its declared artifacts, and echoes the
//! fully-resolved config next to them.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use natmt::align::{
    align_train, calibrate_sigma_c, evaluate_alignment, rerank_topk, select_checkpoint,
    AlignStatus,
};
use natmt::classifier::{confusion_matrix, cross_perspective_grid, train_classifier};
use natmt::corpus::{
    load_corpus, make_classifier_dataset, synthesize_mt_corpus, LoadedCorpus, ParallelPair,
    Perspective, Provenance, Split, Vocabulary,
};
use natmt::evalreport::{
    curve_from_align, curves_to_tsv, evaluate_system, postprocess_output, report_to_tsv,
    BookOutput, EvalConfig, GenerationSettings, PerspectiveClassifiers, SystemOutput,
};
use natmt::metrics::{build_translation_table, top_frequent_words};
use natmt::reward::CharNgramF;
use natmt::seq2seq::{beam_search, train_supervised, train_tagged, TrainStatus};
use natmt::{Classifier, Model, ModelCheckpoint};

use crate::config::{RunConfig, SigmaCMode};

pub struct CliError(pub String);

impl<E: std::fmt::Display> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn fail(msg: impl Into<String>) -> CliError {
    CliError(msg.into())
}

/// Exclusive ownership of an output directory for the duration of a run.
struct RunLock {
    path: PathBuf,
}

impl RunLock {
    fn acquire(out_dir: &Path) -> Result<RunLock> {
        fs::create_dir_all(out_dir)
            .map_err(|e| fail(format!("cannot create {}: {e}", out_dir.display())))?;
        let path = out_dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(fail(format!(
                "output directory {} is locked by another run (remove {} if stale)",
                out_dir.display(),
                path.display()
            ))),
            Err(e) => Err(fail(format!("cannot create lock file: {e}"))),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| fail(format!("cannot write {}: {e}", path.display())))
}

fn echo_config(cfg: &RunConfig, subcommand: &str) -> Result<()> {
    write_file(
        &cfg.out_dir.join(format!("{subcommand}.config.txt")),
        &cfg.resolved(),
    )
}

fn load(cfg: &RunConfig) -> Result<LoadedCorpus> {
    Ok(load_corpus(&cfg.manifest, &cfg.data_dir, cfg.lowercase)?)
}

fn vocab_paths(cfg: &RunConfig) -> (PathBuf, PathBuf) {
    (
        cfg.out_dir.join("vocab.src.txt"),
        cfg.out_dir.join("vocab.tgt.txt"),
    )
}

fn load_vocabs(cfg: &RunConfig) -> Result<(Vocabulary, Vocabulary)> {
    let (src_path, tgt_path) = vocab_paths(cfg);
    if !src_path.exists() || !tgt_path.exists() {
        return Err(fail("vocabulary files missing; run `ingest` first"));
    }
    Ok((Vocabulary::load(&src_path)?, Vocabulary::load(&tgt_path)?))
}

fn base_checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("base.ckpt")
}

pub fn dispatch(subcommand: &str, cfg: &RunConfig) -> Result<()> {
    let _lock = RunLock::acquire(&cfg.out_dir)?;
    echo_config(cfg, subcommand)?;
    match subcommand {
        "ingest" => ingest(cfg),
        "train-base" => train_base(cfg),
        "synth-mt" => synth_mt(cfg),
        "train-classifier" => train_classifier_cmd(cfg),
        "align" => align(cfg),
        "translate" => translate(cfg),
        "rerank" => rerank(cfg),
        "evaluate" => evaluate(cfg),
        "curves" => curves(cfg),
        other => Err(fail(format!("unknown subcommand {other}"))),
    }
}

fn ingest(cfg: &RunConfig) -> Result<()> {
    let corpus = load(cfg)?;
    let train_pairs = corpus.pairs_in(Split::Train);
    let src_sents: Vec<_> = train_pairs.iter().map(|p| p.source.clone()).collect();
    let tgt_sents: Vec<_> = train_pairs.iter().map(|p| p.target.clone()).collect();
    let src_vocab = Vocabulary::build(&src_sents, cfg.vocab_min_freq);
    let tgt_vocab = Vocabulary::build(&tgt_sents, cfg.vocab_min_freq);
    let (src_path, tgt_path) = vocab_paths(cfg);
    src_vocab.save(&src_path)?;
    tgt_vocab.save(&tgt_path)?;

    let mut counts = String::from("split\tmono_docs\tmono_sentences\tbooks\tpairs\n");
    for split in [Split::Train, Split::Valid, Split::Test] {
        let docs = corpus.documents_in(split);
        let books = corpus.books_in(split);
        counts.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            split.as_str(),
            docs.len(),
            docs.iter().map(|d| d.sentences.len()).sum::<usize>(),
            books.len(),
            books.iter().map(|b| b.pairs.len()).sum::<usize>(),
        ));
    }
    write_file(&cfg.out_dir.join("corpus_counts.tsv"), &counts)?;
    println!(
        "ingested {} documents, {} parallel books; vocab sizes {} / {}",
        corpus.documents.len(),
        corpus.parallel.len(),
        src_vocab.len(),
        tgt_vocab.len()
    );
    Ok(())
}

fn train_base(cfg: &RunConfig) -> Result<()> {
    let corpus = load(cfg)?;
    let (src_vocab, tgt_vocab) = load_vocabs(cfg)?;
    let mut model = Model::new(cfg.model.clone(), src_vocab, tgt_vocab, cfg.seed)?;
    let valid = corpus.pairs_in(Split::Valid);
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cfg.seed;

    let outcome = if cfg.train_tagged {
        let translated: Vec<ParallelPair> = corpus
            .books_in(Split::Train)
            .iter()
            .filter(|b| b.provenance != Provenance::Or)
            .flat_map(|b| b.pairs.iter().cloned())
            .collect();
        let original: Vec<ParallelPair> = corpus
            .books_in(Split::Train)
            .iter()
            .filter(|b| b.provenance == Provenance::Or)
            .flat_map(|b| b.pairs.iter().cloned())
            .collect();
        train_tagged(
            &mut model,
            &translated,
            &original,
            &valid,
            &train_cfg,
            cfg.train_original_scale,
        )?
    } else {
        let train = corpus.pairs_in(Split::Train);
        train_supervised(&mut model, &train, &valid, &train_cfg)?
    };

    let mut log = String::from("step\ttrain_loss\tval_loss\n");
    for p in &outcome.history {
        log.push_str(&format!("{}\t{:.6}\t{:.6}\n", p.step, p.train_loss, p.val_loss));
    }
    write_file(&cfg.out_dir.join("train_log.tsv"), &log)?;
    outcome.best.save(&base_checkpoint_path(cfg))?;
    println!(
        "base model: best step {} val loss {:.4} ({:?})",
        outcome.best.step, outcome.best.val_loss, outcome.status
    );
    if outcome.status == TrainStatus::Diverged {
        return Err(fail(
            "training diverged; the last finite checkpoint was saved",
        ));
    }
    Ok(())
}

fn synth_mt(cfg: &RunConfig) -> Result<()> {
    let corpus = load(cfg)?;
    let ckpt_path = base_checkpoint_path(cfg);
    if !ckpt_path.exists() {
        return Err(fail("base checkpoint missing; run `train-base` first"));
    }
    let ckpt = ModelCheckpoint::load(&ckpt_path)?;
    let pairs = corpus.pairs_in(Split::Train);
    let docs = synthesize_mt_corpus(&pairs, &ckpt.model, cfg.synth_beam, "mt")?;
    let dir = cfg.out_dir.join("synth");
    fs::create_dir_all(&dir).map_err(|e| fail(format!("cannot create synth dir: {e}")))?;
    let mut manifest = String::new();
    let mut total = 0usize;
    for doc in &docs {
        let file = format!("{}.txt", doc.id);
        let mut text = String::new();
        for s in &doc.sentences {
            text.push_str(&s.raw);
            text.push('\n');
        }
        write_file(&dir.join(&file), &text)?;
        manifest.push_str(&format!(
            "{}\tsynth/{}\t{}\tMT\ttrain\n",
            doc.id, file, doc.language
        ));
        total += doc.sentences.len();
    }
    write_file(&dir.join("manifest.tsv"), &manifest)?;
    println!("synthesized {} MT documents ({total} sentences)", docs.len());
    Ok(())
}

fn classifier_path(cfg: &RunConfig, perspective: Perspective) -> PathBuf {
    cfg.out_dir
        .join(format!("clf.{}.bin", perspective.as_str().to_lowercase()))
}

fn train_classifier_cmd(cfg: &RunConfig) -> Result<()> {
    let corpus = load(cfg)?;
    let train_docs: Vec<_> = corpus.documents_in(Split::Train).into_iter().cloned().collect();
    let test_docs: Vec<_> = corpus.documents_in(Split::Test).into_iter().cloned().collect();
    let mut trained = Vec::new();
    for &perspective in &cfg.classifier_perspectives {
        let data = make_classifier_dataset(perspective, &train_docs, cfg.seed)?;
        let mut ccfg = cfg.classifier.clone();
        ccfg.seed = cfg.seed;
        let (clf, accuracy) = train_classifier::<natmt::DefaultScalar>(&data, perspective, &ccfg)?;
        clf.save(&classifier_path(cfg, perspective))?;
        println!(
            "{} classifier: {} items, training accuracy {accuracy:.4}",
            perspective,
            data.len()
        );
        if let Ok(test) = make_classifier_dataset(perspective, &test_docs, cfg.seed) {
            let m = confusion_matrix(&clf, &test, 0.5)?;
            write_file(
                &cfg.out_dir
                    .join(format!("confusion.{}.tsv", perspective.as_str().to_lowercase())),
                &m.to_tsv(),
            )?;
        }
        trained.push((perspective, clf));
    }
    if trained.len() > 1 {
        let testsets: Vec<(Perspective, Vec<_>)> = trained
            .iter()
            .filter_map(|(p, _)| {
                make_classifier_dataset(*p, &test_docs, cfg.seed)
                    .ok()
                    .map(|d| (*p, d))
            })
            .collect();
        if testsets.len() == trained.len() {
            let refs: Vec<&Classifier> = trained.iter().map(|(_, c)| c).collect();
            write_file(
                &cfg.out_dir.join("classifier_grid.tsv"),
                &cross_perspective_grid(&refs, &testsets)?,
            )?;
        }
    }
    Ok(())
}

fn align(cfg: &RunConfig) -> Result<()> {
    let corpus = load(cfg)?;
    let ckpt_path = base_checkpoint_path(cfg);
    if !ckpt_path.exists() {
        return Err(fail("base checkpoint missing; run `train-base` first"));
    }
    let base = ModelCheckpoint::load(&ckpt_path)?;
    let clf_path = classifier_path(cfg, cfg.align_perspective);
    if !clf_path.exists() {
        return Err(fail(format!(
            "classifier missing at {}; run `train-classifier` first",
            clf_path.display()
        )));
    }
    let clf = Classifier::load(&clf_path)?;
    let scorer = CharNgramF::default();
    let train = corpus.pairs_in(Split::Train);
    let valid = corpus.pairs_in(Split::Valid);

    let mut acfg = cfg.align.clone();
    acfg.seed = cfg.seed;
    if cfg.sigma_c_mode == SigmaCMode::Auto {
        if valid.is_empty() {
            return Err(fail("sigma_c auto-calibration needs a validation split"));
        }
        acfg.reward.sigma_c = calibrate_sigma_c(&base.model, &valid, &scorer, cfg.beam)?;
    }
    let dir = cfg.out_dir.join("align");
    fs::create_dir_all(&dir).map_err(|e| fail(format!("cannot create align dir: {e}")))?;
    write_file(
        &dir.join("sigma_c.txt"),
        &format!("sigma_c={}\n", acfg.reward.sigma_c),
    )?;

    let outcome = align_train(&base.model, &train, &valid, &clf, &scorer, &acfg)?;
    let mut log = String::from("step\tr_t\tr_c\tr\tnll\treward_loss\ttotal\n");
    for l in &outcome.logs {
        log.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
            l.step, l.mean_r_t, l.mean_r_c, l.mean_r, l.nll_term, l.reward_term, l.combined
        ));
    }
    write_file(&dir.join("step_log.tsv"), &log)?;
    for c in &outcome.checkpoints {
        c.save(&dir.join(format!("checkpoint_{}.ckpt", c.step)))?;
    }
    let mut evals = String::from("step\tclass_rate\tcontent\tmtld\thm\n");
    for e in &outcome.evals {
        evals.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
            e.step, e.class_rate, e.mean_content, e.mtld, e.hm
        ));
    }
    write_file(&dir.join("eval_points.tsv"), &evals)?;

    let selected = select_checkpoint(&outcome.checkpoints, &outcome.evals, cfg.selection)?;
    selected.save(&dir.join("selected.ckpt"))?;
    println!(
        "alignment finished: {} checkpoints, selected step {}",
        outcome.checkpoints.len(),
        selected.step
    );
    if let AlignStatus::Aborted { at_step } = outcome.status {
        return Err(fail(format!(
            "alignment loss went non-finite at step {at_step}; artifacts hold the last finite checkpoint"
        )));
    }
    Ok(())
}

fn decode_checkpoint_path(cfg: &RunConfig) -> PathBuf {
    if let Some(p) = &cfg.checkpoint {
        return p.clone();
    }
    let selected = cfg.out_dir.join("align").join("selected.ckpt");
    if selected.exists() {
        selected
    } else {
        base_checkpoint_path(cfg)
    }
}

fn write_outputs(
    cfg: &RunConfig,
    system: &str,
    books: &[(String, Vec<String>)],
    ckpt_step: u64,
) -> Result<()> {
    let dir = cfg.out_dir.join("outputs").join(system);
    fs::create_dir_all(&dir).map_err(|e| fail(format!("cannot create outputs dir: {e}")))?;
    for (book_id, lines) in books {
        let mut text = String::new();
        for line in lines {
            text.push_str(line);
            text.push('\n');
        }
        write_file(&dir.join(format!("{book_id}.txt")), &text)?;
    }
    write_file(
        &dir.join("meta.tsv"),
        &format!(
            "system\tbeam\tcheckpoint_step\tpostprocess\n{system}\t{}\t{ckpt_step}\t{}\n",
            cfg.beam, cfg.postprocess
        ),
    )
}

fn translate(cfg: &RunConfig) -> Result<()> {
    let corpus = load(cfg)?;
    let ckpt_path = decode_checkpoint_path(cfg);
    if !ckpt_path.exists() {
        return Err(fail(format!(
            "checkpoint missing at {}; run `train-base` or `align` first",
            ckpt_path.display()
        )));
    }
    let ckpt = ModelCheckpoint::load(&ckpt_path)?;
    let mut books = Vec::new();
    for book in corpus.books_in(Split::Test) {
        let mut lines = Vec::with_capacity(book.pairs.len());
        for pair in &book.pairs {
            let scorer = ckpt.model.scorer_for(&pair.source, None)?;
            let hyp = beam_search(&scorer, cfg.beam);
            let raw = ckpt.model.ids_to_sentence(&hyp.ids).raw;
            lines.push(if cfg.postprocess {
                postprocess_output(&raw)
            } else {
                raw
            });
        }
        books.push((book.book_id.clone(), lines));
    }
    write_outputs(cfg, &cfg.system_name, &books, ckpt.step)?;
    println!("translated {} books with beam {}", books.len(), cfg.beam);
    Ok(())
}

fn rerank(cfg: &RunConfig) -> Result<()> {
    let corpus = load(cfg)?;
    let ckpt_path = decode_checkpoint_path(cfg);
    if !ckpt_path.exists() {
        return Err(fail(format!(
            "checkpoint missing at {}; run `train-base` first",
            ckpt_path.display()
        )));
    }
    let ckpt = ModelCheckpoint::load(&ckpt_path)?;
    let clf_path = classifier_path(cfg, cfg.align_perspective);
    if !clf_path.exists() {
        return Err(fail(format!(
            "classifier missing at {}; run `train-classifier` first",
            clf_path.display()
        )));
    }
    let clf = Classifier::load(&clf_path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut books = Vec::new();
    for book in corpus.books_in(Split::Test) {
        let mut lines = Vec::with_capacity(book.pairs.len());
        for pair in &book.pairs {
            let best = rerank_topk(
                &ckpt.model,
                &pair.source,
                cfg.rerank_candidates,
                &clf,
                cfg.rerank_top_k,
                cfg.rerank_temperature,
                &mut rng,
            )?;
            lines.push(if cfg.postprocess {
                postprocess_output(&best.sentence.raw)
            } else {
                best.sentence.raw
            });
        }
        books.push((book.book_id.clone(), lines));
    }
    write_outputs(cfg, &cfg.system_name, &books, ckpt.step)?;
    println!(
        "reranked {} books ({} candidates, top-{} sampling)",
        books.len(),
        cfg.rerank_candidates,
        cfg.rerank_top_k
    );
    Ok(())
}

fn evaluate(cfg: &RunConfig) -> Result<()> {
    let corpus = load(cfg)?;
    let out_dir = cfg.out_dir.join("outputs").join(&cfg.system_name);
    if !out_dir.exists() {
        return Err(fail(format!(
            "no outputs for system {:?} at {}; run `translate` or `rerank` first",
            cfg.system_name,
            out_dir.display()
        )));
    }
    let test_books: Vec<_> = corpus.books_in(Split::Test).into_iter().cloned().collect();
    let mut books = Vec::new();
    for book in &test_books {
        let path = out_dir.join(format!("{}.txt", book.book_id));
        let text = fs::read_to_string(&path)
            .map_err(|e| fail(format!("missing output file {}: {e}", path.display())))?;
        let sentences = text
            .lines()
            .map(|l| natmt::corpus::tokenize(l, cfg.lowercase))
            .collect();
        books.push(BookOutput {
            book_id: book.book_id.clone(),
            sentences,
        });
    }
    let output = SystemOutput {
        name: cfg.system_name.clone(),
        books,
        settings: GenerationSettings {
            beam: cfg.beam,
            checkpoint_step: 0,
        },
    };

    let mut classifiers = PerspectiveClassifiers::default();
    for p in Perspective::ALL {
        let path = classifier_path(cfg, p);
        if path.exists() {
            classifiers.set(Classifier::load(&path)?);
        }
    }

    let train_pairs = corpus.pairs_in(Split::Train);
    let table = if train_pairs.is_empty() {
        None
    } else {
        Some(build_translation_table(&train_pairs, cfg.table.clone())?)
    };
    let tgt_tokens: Vec<_> = train_pairs
        .iter()
        .flat_map(|p| p.target.tokens.iter())
        .collect();
    let top_words = top_frequent_words(tgt_tokens.into_iter(), cfg.b1_top);
    write_file(&cfg.out_dir.join("b1_words.txt"), &(top_words.join("\n") + "\n"))?;

    let eval_cfg = EvalConfig {
        postprocess: cfg.postprocess,
        mtld_threshold: cfg.mtld_threshold,
        top_words: top_words.into_iter().collect::<HashSet<_>>(),
        include_reference_row: true,
    };
    let report = evaluate_system(
        &output,
        &test_books,
        &classifiers,
        &CharNgramF::default(),
        table.as_ref(),
        &eval_cfg,
    )?;
    let path = cfg.out_dir.join(format!("report.{}.tsv", cfg.system_name));
    write_file(&path, &report_to_tsv(&report))?;
    println!("report written to {}", path.display());
    Ok(())
}

fn curves(cfg: &RunConfig) -> Result<()> {
    let corpus = load(cfg)?;
    let dir = cfg.out_dir.join("align");
    if !dir.exists() {
        return Err(fail("no align artifacts; run `align` first"));
    }
    let clf_path = classifier_path(cfg, cfg.align_perspective);
    if !clf_path.exists() {
        return Err(fail(format!(
            "classifier missing at {}; run `train-classifier` first",
            clf_path.display()
        )));
    }
    let clf = Classifier::load(&clf_path)?;
    let valid = corpus.pairs_in(Split::Valid);
    if valid.is_empty() {
        return Err(fail("curves need a validation split"));
    }

    let mut steps: Vec<u64> = Vec::new();
    for entry in fs::read_dir(&dir).map_err(|e| fail(format!("cannot read align dir: {e}")))? {
        let entry = entry.map_err(|e| fail(e.to_string()))?;
        let name = entry.file_name().to_string_lossy().to_string();
        if let Some(step) = name
            .strip_prefix("checkpoint_")
            .and_then(|s| s.strip_suffix(".ckpt"))
        {
            steps.push(
                step.parse()
                    .map_err(|_| fail(format!("malformed checkpoint name {name}")))?,
            );
        }
    }
    steps.sort_unstable();
    if steps.is_empty() {
        return Err(fail("no checkpoints in align dir"));
    }
    let scorer = CharNgramF::default();
    let mut evals = Vec::with_capacity(steps.len());
    for step in steps {
        let ckpt = ModelCheckpoint::load(&dir.join(format!("checkpoint_{step}.ckpt")))?;
        evals.push(evaluate_alignment(
            &ckpt.model,
            &valid,
            &clf,
            &scorer,
            cfg.align.eval_beam,
            step,
        )?);
    }
    let points = curve_from_align(&evals, cfg.align_perspective);
    write_file(&cfg.out_dir.join("curves.tsv"), &curves_to_tsv(&points))?;
    println!("curve file with {} checkpoints written", points.len());
    Ok(())
}
