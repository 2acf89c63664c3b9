//! Manifest-driven corpus loading.
//!
//! The manifest is tab-separated, one entry per line:
//! `id<TAB>path[,path2]<TAB>language<TAB>provenance<TAB>split`.
//! Monolingual entries name one file; parallel entries name the source and
//! target files (comma-separated), which must be line-aligned. Corpus files
//! hold one sentence per line, UTF-8.

use std::collections::HashSet;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use super::{tokenize, CorpusError, Document, ParallelPair, Provenance, Sentence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Result<Split, CorpusError> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(CorpusError::UnknownSplit(other.to_string())),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub id: String,
    pub paths: Vec<PathBuf>,
    pub language: String,
    pub provenance: Provenance,
    pub split: Split,
}

/// Split assignment table; every id appears exactly once.
#[derive(Debug, Clone)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn ids_for(&self, split: Split) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.id.as_str())
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }
}

/// A monolingual or parallel book loaded from disk.
#[derive(Debug, Clone)]
pub struct ParallelBook {
    pub book_id: String,
    pub split: Split,
    /// Provenance of the target side (HT for ordinary parallel data, OR for
    /// target-original pools).
    pub provenance: Provenance,
    pub pairs: Vec<ParallelPair>,
}

#[derive(Debug)]
pub struct LoadedCorpus {
    pub manifest: CorpusManifest,
    pub documents: Vec<(Split, Document)>,
    pub parallel: Vec<ParallelBook>,
}

impl LoadedCorpus {
    pub fn documents_in(&self, split: Split) -> Vec<&Document> {
        self.documents
            .iter()
            .filter(|(s, _)| *s == split)
            .map(|(_, d)| d)
            .collect()
    }

    pub fn pairs_in(&self, split: Split) -> Vec<ParallelPair> {
        self.parallel
            .iter()
            .filter(|b| b.split == split)
            .flat_map(|b| b.pairs.iter().cloned())
            .collect()
    }

    pub fn books_in(&self, split: Split) -> Vec<&ParallelBook> {
        self.parallel.iter().filter(|b| b.split == split).collect()
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let f = BufReader::new(std::fs::File::open(path).map_err(io_err)?);
    let mut lines = Vec::new();
    for line in f.lines() {
        lines.push(line.map_err(io_err)?);
    }
    Ok(lines)
}

pub fn parse_manifest(manifest_path: &Path, data_dir: &Path) -> Result<CorpusManifest, CorpusError> {
    let mut entries = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (line_no, line) in read_lines(manifest_path)?.iter().enumerate() {
        let line_no = line_no + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(CorpusError::BadManifestLine {
                line: line_no,
                message: format!("expected 5 tab-separated fields, got {}", fields.len()),
            });
        }
        let id = fields[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId(id));
        }
        let paths: Vec<PathBuf> = fields[1].split(',').map(|p| data_dir.join(p)).collect();
        if paths.is_empty() || paths.len() > 2 {
            return Err(CorpusError::BadManifestLine {
                line: line_no,
                message: "expected one path (monolingual) or two comma-separated paths (parallel)"
                    .to_string(),
            });
        }
        entries.push(ManifestEntry {
            id,
            paths,
            language: fields[2].to_string(),
            provenance: Provenance::parse(fields[3])?,
            split: Split::parse(fields[4])?,
        });
    }
    Ok(CorpusManifest { entries })
}

/// Loads every manifest entry. Parallel files are checked for line alignment;
/// empty sides after tokenization are rejected.
pub fn load_corpus(
    manifest_path: &Path,
    data_dir: &Path,
    lowercase: bool,
) -> Result<LoadedCorpus, CorpusError> {
    let manifest = parse_manifest(manifest_path, data_dir)?;
    let mut documents = Vec::new();
    let mut parallel = Vec::new();
    for entry in &manifest.entries {
        if entry.paths.len() == 1 {
            let lines = read_lines(&entry.paths[0])?;
            let sentences: Vec<Sentence> =
                lines.iter().map(|l| tokenize(l, lowercase)).collect();
            documents.push((
                entry.split,
                Document {
                    id: entry.id.clone(),
                    language: entry.language.clone(),
                    provenance: entry.provenance,
                    sentences,
                },
            ));
        } else {
            let src_lines = read_lines(&entry.paths[0])?;
            let tgt_lines = read_lines(&entry.paths[1])?;
            if src_lines.len() != tgt_lines.len() {
                return Err(CorpusError::LineCountMismatch {
                    left: entry.paths[0].display().to_string(),
                    right: entry.paths[1].display().to_string(),
                    left_lines: src_lines.len(),
                    right_lines: tgt_lines.len(),
                });
            }
            let mut pairs = Vec::with_capacity(src_lines.len());
            for (i, (s, t)) in src_lines.iter().zip(&tgt_lines).enumerate() {
                let source = tokenize(s, lowercase);
                let target = tokenize(t, lowercase);
                if source.is_empty() {
                    return Err(CorpusError::EmptySentence {
                        path: entry.paths[0].display().to_string(),
                        line: i + 1,
                    });
                }
                if target.is_empty() {
                    return Err(CorpusError::EmptySentence {
                        path: entry.paths[1].display().to_string(),
                        line: i + 1,
                    });
                }
                pairs.push(ParallelPair {
                    source,
                    target,
                    book_id: entry.id.clone(),
                });
            }
            parallel.push(ParallelBook {
                book_id: entry.id.clone(),
                split: entry.split,
                provenance: entry.provenance,
                pairs,
            });
        }
    }
    Ok(LoadedCorpus {
        manifest,
        documents,
        parallel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, contents: &str) {
        fs::write(dir.join(name), contents).unwrap();
    }

    #[test]
    fn loads_paired_files() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "b1.src", "a b\nc d\n");
        write(dir.path(), "b1.tgt", "x y\nz w\n");
        write(dir.path(), "m1.txt", "hello there\n");
        write(
            dir.path(),
            "manifest.tsv",
            "b1\tb1.src,b1.tgt\ten-nl\tHT\ttrain\nm1\tm1.txt\tnl\tOR\ttrain\n",
        );
        let loaded = load_corpus(&dir.path().join("manifest.tsv"), dir.path(), false).unwrap();
        assert_eq!(loaded.parallel.len(), 1);
        assert_eq!(loaded.parallel[0].pairs.len(), 2);
        assert_eq!(loaded.documents.len(), 1);
        assert_eq!(loaded.manifest.count(Split::Train), 2);
    }

    #[test]
    fn line_count_mismatch_reports_files_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "b.src", "a\nb\nc\n");
        write(dir.path(), "b.tgt", "x\ny\n");
        write(dir.path(), "manifest.tsv", "b\tb.src,b.tgt\ten-nl\tHT\ttrain\n");
        let err = load_corpus(&dir.path().join("manifest.tsv"), dir.path(), false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("b.src") && msg.contains('3') && msg.contains('2'), "{msg}");
    }

    #[test]
    fn unknown_provenance_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "m.txt", "x\n");
        write(dir.path(), "manifest.tsv", "m\tm.txt\tnl\tXX\ttrain\n");
        let err = load_corpus(&dir.path().join("manifest.tsv"), dir.path(), false).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownProvenance(ref s) if s == "XX"));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "m.txt", "x\n");
        write(
            dir.path(),
            "manifest.tsv",
            "m\tm.txt\tnl\tOR\ttrain\nm\tm.txt\tnl\tOR\ttest\n",
        );
        let err = load_corpus(&dir.path().join("manifest.tsv"), dir.path(), false).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId(_)));
    }
}
