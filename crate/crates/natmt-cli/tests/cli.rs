//! End-to-end pipeline runs through the binary: every subcommand, the
//! failure diagnostics, and the byte-identical rerun contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use natmt::corpus::synth::StyleTask;
use natmt::corpus::ParallelPair;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_natmt")
}

fn write_pairs(dir: &Path, stem: &str, pairs: &[ParallelPair]) {
    let mut src = String::new();
    let mut tgt = String::new();
    for p in pairs {
        src.push_str(&p.source.raw);
        src.push('\n');
        tgt.push_str(&p.target.raw);
        tgt.push('\n');
    }
    fs::write(dir.join(format!("{stem}.src")), src).unwrap();
    fs::write(dir.join(format!("{stem}.tgt")), tgt).unwrap();
}

/// Tiny style-task corpus in CLI layout.
fn make_corpus(dir: &Path) {
    let task = StyleTask {
        content_types: 10,
        min_words: 3,
        max_words: 6,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    write_pairs(dir, "train", &task.pairs(160, 0.1, "train", &mut rng));
    write_pairs(dir, "valid", &task.pairs(30, 0.1, "valid", &mut rng));
    write_pairs(dir, "test1", &task.pairs(20, 0.5, "test1", &mut rng));
    write_pairs(dir, "test2", &task.pairs(20, 0.5, "test2", &mut rng));
    let (bland, natural) = task.register_docs(80, &mut rng);
    for (name, doc) in [("pool_bland.txt", &bland), ("pool_natural.txt", &natural)] {
        let text: String = doc.sentences.iter().map(|s| s.raw.clone() + "\n").collect();
        fs::write(dir.join(name), text).unwrap();
    }
    fs::write(
        dir.join("manifest.tsv"),
        "book-train\ttrain.src,train.tgt\tsyn\tHT\ttrain\n\
         book-valid\tvalid.src,valid.tgt\tsyn\tHT\tvalid\n\
         book-test1\ttest1.src,test1.tgt\tsyn\tHT\ttest\n\
         book-test2\ttest2.src,test2.tgt\tsyn\tHT\ttest\n\
         pool-bland\tpool_bland.txt\tsyn\tMT\ttrain\n\
         pool-natural\tpool_natural.txt\tsyn\tHT\ttrain\n",
    )
    .unwrap();
}

struct Workspace {
    _tmp: tempfile::TempDir,
    data: PathBuf,
    out: PathBuf,
}

fn workspace() -> Workspace {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    fs::create_dir_all(&data).unwrap();
    make_corpus(&data);
    Workspace {
        data,
        out,
        _tmp: tmp,
    }
}

fn run(ws: &Workspace, args: &[&str]) -> Output {
    let mut all = vec![
        args[0],
        "--set",
        // small model and short schedules so the whole pipeline stays quick
        "model.enc_layers=1",
        "--set",
        "model.dec_layers=1",
        "--set",
        "model.width=16",
        "--set",
        "model.heads=2",
        "--set",
        "model.ffn_width=32",
        "--set",
        "model.max_len=12",
        "--set",
        "vocab.min_freq=1",
        "--set",
        "train.max_lr=0.003",
        "--set",
        "train.warmup_steps=10",
        "--set",
        "train.max_steps=150",
        "--set",
        "train.batch_size=8",
        "--set",
        "train.grad_accum=1",
        "--set",
        "train.eval_interval=50",
        "--set",
        "align.max_steps=20",
        "--set",
        "align.checkpoint_interval=10",
        "--set",
        "align.batch_size=4",
        "--set",
        "align.eval_beam=2",
        "--set",
        "align.perspective=mt-ht",
        "--set",
        "classifier.perspective=mt-ht",
        "--set",
        "classifier.epochs=60",
        "--set",
        "decode.beam=2",
        "--set",
        "metrics.table_min_freq=2",
        "--set",
        "metrics.b1_top=5",
        "--seed",
        "11",
    ];
    let data_set = format!("paths.data_dir={}", ws.data.display());
    let manifest_set = format!("paths.manifest={}", ws.data.join("manifest.tsv").display());
    let out_set = format!("paths.out_dir={}", ws.out.display());
    all.extend(["--set", &data_set, "--set", &manifest_set, "--set", &out_set]);
    all.extend(&args[1..]);
    Command::new(bin())
        .args(&all)
        .env_remove("NATMT_CONFIG")
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn full_pipeline_produces_all_artifacts() {
    let ws = workspace();
    assert_ok(&run(&ws, &["ingest"]));
    assert!(ws.out.join("vocab.src.txt").exists());
    assert!(ws.out.join("vocab.tgt.txt").exists());
    assert!(ws.out.join("corpus_counts.tsv").exists());
    assert!(ws.out.join("ingest.config.txt").exists());
    // the lock is released after the run
    assert!(!ws.out.join(".lock").exists());

    assert_ok(&run(&ws, &["train-base"]));
    assert!(ws.out.join("base.ckpt").exists());
    assert!(ws.out.join("train_log.tsv").exists());

    assert_ok(&run(&ws, &["synth-mt"]));
    assert!(ws.out.join("synth").join("manifest.tsv").exists());

    assert_ok(&run(&ws, &["train-classifier"]));
    assert!(ws.out.join("clf.mt-ht.bin").exists());

    assert_ok(&run(&ws, &["align"]));
    assert!(ws.out.join("align").join("selected.ckpt").exists());
    assert!(ws.out.join("align").join("step_log.tsv").exists());
    assert!(ws.out.join("align").join("checkpoint_0.ckpt").exists());
    assert!(ws.out.join("align").join("sigma_c.txt").exists());

    assert_ok(&run(&ws, &["translate"]));
    let outputs = ws.out.join("outputs").join("aligned");
    assert!(outputs.join("book-test1.txt").exists());
    assert!(outputs.join("book-test2.txt").exists());
    assert!(outputs.join("meta.tsv").exists());

    assert_ok(&run(&ws, &["evaluate"]));
    let report = ws.out.join("report.aligned.tsv");
    assert!(report.exists());
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.contains("book\tbleu\tcontent_chrf"));
    assert!(text.contains("avg\t"));
    assert!(ws.out.join("b1_words.txt").exists());

    assert_ok(&run(&ws, &["curves"]));
    let curves = fs::read_to_string(ws.out.join("curves.tsv")).unwrap();
    assert!(curves.starts_with("step\tht_or\tmt_ht\tmt_or\tmtld\tcontent\thm"));
    // one row per checkpoint including step 0
    assert!(curves.lines().count() >= 3);

    assert_ok(&run(&ws, &["rerank", "--set", "decode.system_name=rr"]));
    assert!(ws.out.join("outputs").join("rr").join("book-test1.txt").exists());
}

#[test]
fn align_without_base_checkpoint_fails_with_diagnostic() {
    let ws = workspace();
    assert_ok(&run(&ws, &["ingest"]));
    let out = run(&ws, &["align"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("base checkpoint missing"), "{stderr}");
}

#[test]
fn unknown_subcommand_exits_with_usage_error() {
    let out = Command::new(bin()).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_exits_one_and_names_the_field() {
    let out = Command::new(bin())
        .args(["ingest", "--set", "bogus.key=1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bogus.key"), "{stderr}");
}

#[test]
fn identity_system_scores_bleu_100() {
    let ws = workspace();
    assert_ok(&run(&ws, &["ingest"]));
    // hand-write "outputs" that are the references themselves
    let outputs = ws.out.join("outputs").join("identity");
    fs::create_dir_all(&outputs).unwrap();
    for book in ["test1", "test2"] {
        fs::copy(
            ws.data.join(format!("{book}.tgt")),
            outputs.join(format!("book-{book}.txt")),
        )
        .unwrap();
    }
    fs::write(
        outputs.join("meta.tsv"),
        "system\tbeam\tcheckpoint_step\tpostprocess\nidentity\t1\t0\ttrue\n",
    )
    .unwrap();
    assert_ok(&run(&ws, &["evaluate", "--set", "decode.system_name=identity"]));
    let report = fs::read_to_string(ws.out.join("report.identity.tsv")).unwrap();
    for line in report.lines().filter(|l| l.starts_with("book-test")) {
        let bleu = line.split('\t').nth(1).unwrap();
        assert_eq!(bleu, "100.00", "line: {line}");
    }
}

#[test]
fn reruns_with_same_config_and_seed_are_byte_identical() {
    let ws = workspace();
    assert_ok(&run(&ws, &["ingest"]));
    assert_ok(&run(&ws, &["train-base"]));
    let first_ckpt = fs::read(ws.out.join("base.ckpt")).unwrap();
    let first_log = fs::read(ws.out.join("train_log.tsv")).unwrap();
    assert_ok(&run(&ws, &["train-base"]));
    assert_eq!(first_ckpt, fs::read(ws.out.join("base.ckpt")).unwrap());
    assert_eq!(first_log, fs::read(ws.out.join("train_log.tsv")).unwrap());

    assert_ok(&run(&ws, &["translate"]));
    let out_file = ws.out.join("outputs").join("aligned").join("book-test1.txt");
    let first_out = fs::read(&out_file).unwrap();
    assert_ok(&run(&ws, &["translate"]));
    assert_eq!(first_out, fs::read(&out_file).unwrap());

    assert_ok(&run(&ws, &["evaluate"]));
    let report = ws.out.join("report.aligned.tsv");
    let first_report = fs::read(&report).unwrap();
    assert_ok(&run(&ws, &["evaluate"]));
    assert_eq!(first_report, fs::read(&report).unwrap());
}

#[test]
fn lock_file_blocks_concurrent_runs() {
    let ws = workspace();
    fs::create_dir_all(&ws.out).unwrap();
    fs::write(ws.out.join(".lock"), b"").unwrap();
    let out = run(&ws, &["ingest"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("locked"));
}
