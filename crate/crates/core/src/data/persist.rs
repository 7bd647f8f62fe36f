use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{DatasetBundle, InteractionSequence, ItemVocabulary, Provenance};
use crate::error::{Error, Result};

pub const VOCAB_FILE: &str = "vocab.txt";
pub const PROVENANCE_FILE: &str = "dataset.json";
pub const SPLIT_FILES: [&str; 3] = ["train.tsv", "valid.tsv", "test.tsv"];

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn format_sequences(seqs: &[InteractionSequence]) -> Result<String> {
    let mut out = String::new();
    for s in seqs {
        if s.user.contains(['\t', '\n']) {
            return Err(Error::Config(format!("user id {:?} contains a tab or newline", s.user)));
        }
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        writeln!(out, "{}\t{}\t{}", s.user, join(&s.history), join(&s.future)).expect("string write");
    }
    Ok(out)
}

fn parse_sequences(text: &str, source: &str, vocab_len: usize) -> Result<Vec<InteractionSequence>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let err = |message: String| Error::Parse {
            path: source.to_string(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 tab-separated fields, got {}", fields.len())));
        }
        let parse_list = |field: &str| -> Result<Vec<usize>> {
            field
                .split(',')
                .map(|v| {
                    let idx = v.parse::<usize>().map_err(|_| err(format!("bad item index `{v}`")))?;
                    if idx >= vocab_len {
                        return Err(err(format!("item index {idx} outside vocabulary of {vocab_len}")));
                    }
                    Ok(idx)
                })
                .collect()
        };
        out.push(InteractionSequence {
            user: fields[0].to_string(),
            history: parse_list(fields[1])?,
            future: parse_list(fields[2])?,
        });
    }
    Ok(out)
}

/// Writes `vocab.txt` (one token per line; line number is the index), one
/// `user<TAB>h1,h2,...<TAB>f1,f2,...` file per split and `dataset.json`.
pub fn save_bundle(dir: &Path, bundle: &DatasetBundle) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut vocab = String::new();
    for t in bundle.vocab.tokens() {
        if t.contains('\n') {
            return Err(Error::Config(format!("item token {t:?} contains a newline")));
        }
        vocab.push_str(t);
        vocab.push('\n');
    }
    write(&dir.join(VOCAB_FILE), &vocab)?;
    for (name, seqs) in SPLIT_FILES.iter().zip([&bundle.train, &bundle.valid, &bundle.test]) {
        write(&dir.join(name), &format_sequences(seqs)?)?;
    }
    let prov = serde_json::to_string_pretty(&bundle.provenance)?;
    write(&dir.join(PROVENANCE_FILE), &prov)
}

pub fn load_bundle(dir: &Path) -> Result<DatasetBundle> {
    let vocab_text = read(&dir.join(VOCAB_FILE))?;
    let vocab = ItemVocabulary::from_tokens(vocab_text.lines());
    if vocab.len() != vocab_text.lines().count() {
        return Err(Error::Parse {
            path: dir.join(VOCAB_FILE).display().to_string(),
            line: 0,
            message: "duplicate tokens in vocabulary".into(),
        });
    }
    let mut splits = Vec::new();
    for name in SPLIT_FILES {
        let path = dir.join(name);
        splits.push(parse_sequences(&read(&path)?, &path.display().to_string(), vocab.len())?);
    }
    let provenance: Provenance = serde_json::from_str(&read(&dir.join(PROVENANCE_FILE))?)?;
    let test = splits.pop().expect("three splits");
    let valid = splits.pop().expect("three splits");
    let train = splits.pop().expect("three splits");
    Ok(DatasetBundle {
        train,
        valid,
        test,
        vocab,
        provenance,
    })
}
