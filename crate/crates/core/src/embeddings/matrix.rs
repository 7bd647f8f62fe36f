use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::ItemVocabulary;
use crate::error::{Error, Result};
use crate::numerics::{Checkpoint, ParamStore, Precision, Tensor};

/// Tolerance on row norms after [`EmbeddingMatrix::normalize`].
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// One `dim`-dimensional vector per item index, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    rows: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(vocab_size: usize, dim: usize, rows: Vec<f64>) -> Result<Self> {
        if dim == 0 || vocab_size == 0 {
            return Err(Error::Empty("embedding matrix"));
        }
        if rows.len() != vocab_size * dim {
            return Err(Error::ShapeMismatch {
                op: "embedding_matrix",
                left: vec![vocab_size, dim],
                right: vec![rows.len()],
            });
        }
        Ok(Self { dim, rows })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::Empty("embedding rows"))?;
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::ShapeMismatch {
                op: "embedding_matrix",
                left: vec![dim],
                right: vec![bad.len()],
            });
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }

    pub(crate) fn row_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.rows[index * self.dim..(index + 1) * self.dim]
    }

    /// The vector of item `index`.
    pub fn lookup(&self, index: usize) -> Result<&[f64]> {
        if index >= self.vocab_size() {
            return Err(Error::IndexOutOfRange {
                what: "embedding matrix",
                index,
                len: self.vocab_size(),
            });
        }
        Ok(&self.rows[index * self.dim..(index + 1) * self.dim])
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.chunks_exact(self.dim)
    }

    /// Scales every row to unit L2 norm. `vocab` only names offending rows.
    pub fn normalize(&self, vocab: Option<&ItemVocabulary>) -> Result<Self> {
        let mut out = self.clone();
        for i in 0..self.vocab_size() {
            let row = out.row_mut(i);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                let item = vocab
                    .and_then(|v| v.token(i).ok())
                    .map(str::to_string)
                    .unwrap_or_else(|| format!("#{i}"));
                return Err(Error::ZeroNorm { item });
            }
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
        Ok(out)
    }

    pub fn is_unit_norm(&self) -> bool {
        self.rows()
            .all(|r| (r.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() <= UNIT_NORM_TOLERANCE)
    }

    /// SHA-256 over the raw bits of every value.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for v in &self.rows {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Text format: `vocab_size dim` header, then `token v1 ... vdim` per item.
    pub fn to_text(&self, vocab: &ItemVocabulary) -> Result<String> {
        if vocab.len() != self.vocab_size() {
            return Err(Error::Config(format!(
                "vocabulary has {} items but the matrix has {} rows",
                vocab.len(),
                self.vocab_size()
            )));
        }
        let mut out = format!("{} {}\n", self.vocab_size(), self.dim);
        for (token, row) in vocab.tokens().iter().zip(self.rows()) {
            if token.contains(char::is_whitespace) {
                return Err(Error::Config(format!("token {token:?} contains whitespace")));
            }
            out.push_str(token);
            for v in row {
                let _ = write!(out, " {v:?}");
            }
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses the text format, ordering rows by `vocab`. Vectors for tokens
    /// outside the vocabulary are ignored; missing vocabulary items are an error.
    pub fn from_text(text: &str, vocab: &ItemVocabulary, source: &str) -> Result<Self> {
        let perr = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| perr(1, "empty vector file".into()))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| perr(1, format!("bad header field `{v}`"))))
            .collect::<Result<_>>()?;
        let [count, dim] = head[..] else {
            return Err(perr(1, "header must be `vocab_size dim`".into()));
        };
        if dim == 0 {
            return Err(perr(1, "dimension must be positive".into()));
        }
        let mut rows = vec![f64::NAN; vocab.len() * dim];
        let mut filled = vec![false; vocab.len()];
        let mut seen = 0;
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            seen += 1;
            let mut parts = line.split_whitespace();
            let token = parts.next().expect("non-empty line");
            let values: Vec<f64> = parts
                .map(|v| v.parse::<f64>().map_err(|_| perr(i + 1, format!("bad value `{v}`"))))
                .collect::<Result<_>>()?;
            if values.len() != dim {
                return Err(perr(i + 1, format!("expected {dim} values, got {}", values.len())));
            }
            if let Some(idx) = vocab.get(token) {
                rows[idx * dim..(idx + 1) * dim].copy_from_slice(&values);
                filled[idx] = true;
            }
        }
        if seen != count {
            return Err(perr(1, format!("header announces {count} vectors, file has {seen}")));
        }
        if let Some(missing) = filled.iter().position(|f| !f) {
            return Err(perr(
                0,
                format!("no vector for vocabulary item `{}`", vocab.token(missing)?),
            ));
        }
        Self::new(vocab.len(), dim, rows)
    }

    pub fn save_text(&self, path: &Path, vocab: &ItemVocabulary) -> Result<()> {
        fs::write(path, self.to_text(vocab)?).map_err(|e| Error::io(path, e))
    }

    pub fn load_text(path: &Path, vocab: &ItemVocabulary) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, vocab, &path.display().to_string())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut store = ParamStore::new();
        let t = Tensor::matrix(self.vocab_size(), self.dim, self.rows.clone()).expect("consistent shape");
        store.insert("embeddings", t).expect("fresh store");
        Checkpoint::from_params(&store, Precision::F64).with_metadata("kind", "embeddings")
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let store = ckpt.to_params()?;
        let t = store.get(store.id("embeddings")?);
        match t.shape() {
            [v, d] => Self::new(*v, *d, t.data().to_vec()),
            other => Err(Error::InvalidOperand {
                op: "embedding_checkpoint",
                message: format!("expected a matrix, got shape {other:?}"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_four_five() {
        let m = EmbeddingMatrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let n = m.normalize(None).unwrap();
        assert!((n.lookup(0).unwrap()[0] - 0.6).abs() < 1e-15);
        assert!((n.lookup(0).unwrap()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn normalize_is_idempotent_on_unit_rows() {
        let m = EmbeddingMatrix::from_rows(&[vec![0.6, 0.8], vec![1.0, 0.0]]).unwrap();
        let n = m.normalize(None).unwrap();
        for (a, b) in m.as_slice().iter().zip(n.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
        let twice = n.normalize(None).unwrap();
        for (a, b) in n.as_slice().iter().zip(twice.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(twice.is_unit_norm());
    }

    #[test]
    fn zero_row_names_the_item() {
        let m = EmbeddingMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let vocab = ItemVocabulary::from_tokens(["a", "b"]);
        match m.normalize(Some(&vocab)) {
            Err(Error::ZeroNorm { item }) => assert_eq!(item, "b"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lookup_bounds() {
        let m = EmbeddingMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.lookup(0).unwrap(), &[1.0, 2.0]);
        assert!(matches!(m.lookup(2), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn text_and_checkpoint_round_trips_are_exact() {
        let vocab = ItemVocabulary::from_tokens(["a", "b", "c"]);
        let m = EmbeddingMatrix::from_rows(&[
            vec![0.1, -1.0 / 3.0],
            vec![f64::MIN_POSITIVE, 1e300],
            vec![-0.0, 2.0f64.sqrt()],
        ])
        .unwrap();
        let text = m.to_text(&vocab).unwrap();
        let back = EmbeddingMatrix::from_text(&text, &vocab, "t").unwrap();
        assert_eq!(back.checksum(), m.checksum());

        let json = m.to_checkpoint().to_json().unwrap();
        let back = EmbeddingMatrix::from_checkpoint(&Checkpoint::from_json(&json).unwrap()).unwrap();
        assert_eq!(back.checksum(), m.checksum());
        assert_eq!(back.lookup(0).unwrap(), m.lookup(0).unwrap());
    }

    #[test]
    fn text_import_reorders_by_vocabulary_and_checks_coverage() {
        let vocab = ItemVocabulary::from_tokens(["b", "a"]);
        let text = "3 2\na 1 0\nb 0 1\nz 5 5\n";
        let m = EmbeddingMatrix::from_text(text, &vocab, "t").unwrap();
        assert_eq!(m.lookup(0).unwrap(), &[0.0, 1.0]);
        assert_eq!(m.lookup(1).unwrap(), &[1.0, 0.0]);

        let short = ItemVocabulary::from_tokens(["a", "q"]);
        assert!(EmbeddingMatrix::from_text(text, &short, "t").is_err());
        assert!(EmbeddingMatrix::from_text("2 2\na 1 0\n", &vocab, "t").is_err());
    }
}
