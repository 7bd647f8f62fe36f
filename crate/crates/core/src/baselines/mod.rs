//! Count-based reference recommenders: recently viewed items (RVI) and
//! item-to-item co-occurrence conditionals (Item-CF).

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::InteractionSequence;
use crate::error::{Error, Result};
use crate::evaluation::{rank_scores, RankedRecommendations, Recommender};

/// Counts `c(i, j)` of future item `i` co-occurring with history item `j`,
/// every occurrence counted, plus the marginals `c(j) = Σ_i c(i, j)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CooccurrenceTable {
    // seed j -> future item i -> count
    by_seed: BTreeMap<usize, BTreeMap<usize, u64>>,
    marginal: BTreeMap<usize, u64>,
}

impl CooccurrenceTable {
    pub fn count(&self, future: usize, seed: usize) -> u64 {
        self.by_seed
            .get(&seed)
            .and_then(|m| m.get(&future))
            .copied()
            .unwrap_or(0)
    }

    pub fn marginal(&self, seed: usize) -> u64 {
        self.marginal.get(&seed).copied().unwrap_or(0)
    }

    /// `P(i | j) = c(i, j) / c(j)`; `None` for a seed never seen.
    pub fn conditional(&self, future: usize, seed: usize) -> Option<f64> {
        let total = self.marginal(seed);
        (total > 0).then(|| self.count(future, seed) as f64 / total as f64)
    }

    /// Every `(i, P(i | j))` with a non-zero count, ascending by `i`.
    pub fn conditionals(&self, seed: usize) -> Vec<(usize, f64)> {
        let total = self.marginal(seed) as f64;
        self.by_seed
            .get(&seed)
            .map(|m| m.iter().map(|(&i, &c)| (i, c as f64 / total)).collect())
            .unwrap_or_default()
    }

    pub fn is_empty(&self) -> bool {
        self.marginal.is_empty()
    }

    pub fn add(&mut self, future: usize, seed: usize, count: u64) {
        if count == 0 {
            return;
        }
        *self.by_seed.entry(seed).or_default().entry(future).or_insert(0) += count;
        *self.marginal.entry(seed).or_insert(0) += count;
    }

    /// `(i, j, count)` sorted by `i`, then `j`.
    pub fn triples(&self) -> Vec<(usize, usize, u64)> {
        let mut out: Vec<_> = self
            .by_seed
            .iter()
            .flat_map(|(&j, m)| m.iter().map(move |(&i, &c)| (i, j, c)))
            .collect();
        out.sort_unstable();
        out
    }

    /// One `i<TAB>j<TAB>count` line per non-zero pair, sorted.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, j, c) in self.triples() {
            let _ = writeln!(out, "{i}\t{j}\t{c}");
        }
        out
    }

    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let mut table = Self::default();
        for (n, line) in text.lines().enumerate() {
            let err = |message: String| Error::Parse {
                path: source.to_string(),
                line: n + 1,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [i, j, c] = fields[..] else {
                return Err(err(format!("expected 3 fields, got {}", fields.len())));
            };
            let parse = |v: &str| v.parse::<u64>().map_err(|_| err(format!("bad number `{v}`")));
            let (i, j, c) = (parse(i)? as usize, parse(j)? as usize, parse(c)?);
            if c == 0 {
                return Err(err("zero count".into()));
            }
            if table.count(i, j) > 0 {
                return Err(err(format!("pair ({i}, {j}) listed twice")));
            }
            table.add(i, j, c);
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }
}

/// Counts every (future item, history item) pair of every sequence.
pub fn build_table(sequences: &[InteractionSequence]) -> CooccurrenceTable {
    let mut table = CooccurrenceTable::default();
    for s in sequences {
        for &j in &s.history {
            for &i in &s.future {
                table.add(i, j, 1);
            }
        }
    }
    table
}

/// `score(i) = Σ_k P(i | s_k) / |history|` over history positions; unseen
/// seeds contribute nothing.
pub fn item_cf_scores(history: &[usize], table: &CooccurrenceTable, vocab_size: usize) -> Vec<f64> {
    let mut scores = vec![0.0; vocab_size];
    if history.is_empty() {
        return scores;
    }
    for &seed in history {
        for (i, p) in table.conditionals(seed) {
            if i < vocab_size {
                scores[i] += p;
            }
        }
    }
    let n = history.len() as f64;
    scores.iter_mut().for_each(|s| *s /= n);
    scores
}

/// Distinct history items, most recent first.
pub fn rvi_rank(history: &[usize]) -> Result<RankedRecommendations> {
    if history.is_empty() {
        return Err(Error::Empty("history"));
    }
    let mut seen = HashSet::new();
    let items: Vec<usize> = history.iter().rev().copied().filter(|&i| seen.insert(i)).collect();
    let scores = (0..items.len()).map(|r| -(r as f64)).collect();
    RankedRecommendations::new(items, scores)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Rvi;

impl Recommender for Rvi {
    fn name(&self) -> String {
        "RVI".into()
    }

    fn recommend(&self, history: &[usize], k: usize, exclude: Option<&HashSet<usize>>) -> Result<RankedRecommendations> {
        let full = rvi_rank(history)?;
        let (items, scores): (Vec<usize>, Vec<f64>) = full
            .items()
            .iter()
            .zip(full.scores())
            .filter(|(i, _)| exclude.is_none_or(|e| !e.contains(i)))
            .take(k)
            .map(|(&i, &s)| (i, s))
            .unzip();
        RankedRecommendations::new(items, scores)
    }
}

#[derive(Debug, Clone)]
pub struct ItemCf {
    pub table: CooccurrenceTable,
    pub vocab_size: usize,
}

impl Recommender for ItemCf {
    fn name(&self) -> String {
        "Item-CF".into()
    }

    fn recommend(&self, history: &[usize], k: usize, exclude: Option<&HashSet<usize>>) -> Result<RankedRecommendations> {
        rank_scores(&item_cf_scores(history, &self.table, self.vocab_size), k, exclude)
    }
}
