//! Writes a small synthetic two-register corpus in the on-disk layout the
//! CLI expects: line-parallel train/valid/test files, register-labeled
//! monolingual pools for classifier training, and a manifest.
//!
//! Usage: `cargo run --example make_demo_corpus -- <out-dir> [seed]`

use std::fs;
use std::path::Path;

use natmt::corpus::synth::StyleTask;
use natmt::corpus::ParallelPair;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

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

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "demo-data".into());
    let seed: u64 = std::env::args()
        .nth(2)
        .map(|s| s.parse().expect("seed must be an integer"))
        .unwrap_or(2024);
    let dir = Path::new(&out);
    fs::create_dir_all(dir).unwrap();

    let task = StyleTask::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // parallel data: targets mostly in the bland register
    write_pairs(dir, "train", &task.pairs(2000, 0.1, "train", &mut rng));
    write_pairs(dir, "valid", &task.pairs(200, 0.1, "valid", &mut rng));
    // two test books with an even register mix in the references
    write_pairs(dir, "test1", &task.pairs(150, 0.5, "test1", &mut rng));
    write_pairs(dir, "test2", &task.pairs(150, 0.5, "test2", &mut rng));

    // register-labeled pools for the MT-HT classifier
    let (bland, natural) = task.register_docs(600, &mut rng);
    let (bland_test, natural_test) = task.register_docs(150, &mut rng);
    let dump = |name: &str, doc: &natmt::corpus::Document| {
        let mut text = String::new();
        for s in &doc.sentences {
            text.push_str(&s.raw);
            text.push('\n');
        }
        fs::write(dir.join(name), text).unwrap();
    };
    dump("pool_bland.txt", &bland);
    dump("pool_natural.txt", &natural);
    dump("pool_bland_test.txt", &bland_test);
    dump("pool_natural_test.txt", &natural_test);

    let manifest = "\
book-train\ttrain.src,train.tgt\tsyn\tHT\ttrain
book-valid\tvalid.src,valid.tgt\tsyn\tHT\tvalid
book-test1\ttest1.src,test1.tgt\tsyn\tHT\ttest
book-test2\ttest2.src,test2.tgt\tsyn\tHT\ttest
pool-bland\tpool_bland.txt\tsyn\tMT\ttrain
pool-natural\tpool_natural.txt\tsyn\tHT\ttrain
pool-bland-test\tpool_bland_test.txt\tsyn\tMT\ttest
pool-natural-test\tpool_natural_test.txt\tsyn\tHT\ttest
";
    fs::write(dir.join("manifest.tsv"), manifest).unwrap();
    println!("demo corpus written to {}", dir.display());
}
