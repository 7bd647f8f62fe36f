use std::collections::HashSet;
use std::fmt::Write as _;
use std::thread;

use serde::{Deserialize, Serialize};

use super::metrics::{f1, ndcg_at_k, precision_at_k, recall_at_k};
use super::RankedRecommendations;
use crate::data::InteractionSequence;
use crate::error::{Error, Result};

/// Anything that ranks items for a history.
pub trait Recommender: Sync {
    fn name(&self) -> String;

    /// Mixture component count, for models that have one.
    fn components(&self) -> Option<usize> {
        None
    }

    fn recommend(&self, history: &[usize], k: usize, exclude: Option<&HashSet<usize>>) -> Result<RankedRecommendations>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub cutoffs: Vec<usize>,
    /// Never recommend items already in the history.
    pub exclude_history: bool,
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            cutoffs: vec![10, 20],
            exclude_history: false,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffMetrics {
    pub cutoff: usize,
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
    pub f1: f64,
}

/// Macro-averaged metrics of one model over a set of users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub components: Option<usize>,
    pub users: usize,
    /// Users without any target item.
    pub skipped: usize,
    pub rows: Vec<CutoffMetrics>,
}

pub const CSV_HEADER: &str = "model,cutoff,precision,recall,ndcg,f1";
pub const PLOT_HEADER: &str = "model,m,metric,value";

impl MetricReport {
    pub fn at(&self, cutoff: usize) -> Option<&CutoffMetrics> {
        self.rows.iter().find(|r| r.cutoff == cutoff)
    }

    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                self.model, r.cutoff, r.precision, r.recall, r.ndcg, r.f1
            );
        }
        out
    }

    /// Rows `model,m,metric,value` with metric names like `recall@10`; empty
    /// for models without components.
    pub fn plot_rows(&self) -> String {
        let mut out = String::new();
        let Some(m) = self.components else {
            return out;
        };
        let family = self.model.rsplit_once('-').map_or(self.model.as_str(), |(f, _)| f);
        for r in &self.rows {
            for (name, v) in [("precision", r.precision), ("recall", r.recall), ("ndcg", r.ndcg), ("f1", r.f1)] {
                let _ = writeln!(out, "{family},{m},{name}@{},{v}", r.cutoff);
            }
        }
        out
    }
}

pub fn reports_csv(reports: &[MetricReport]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    reports.iter().for_each(|r| out.push_str(&r.csv_rows()));
    out
}

pub fn reports_plot(reports: &[MetricReport]) -> String {
    let mut out = format!("{PLOT_HEADER}\n");
    reports.iter().for_each(|r| out.push_str(&r.plot_rows()));
    out
}

/// Fixed-width table with one line per model and cutoff.
pub fn reports_table(reports: &[MetricReport]) -> String {
    let width = reports.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
    let mut out = format!(
        "{:<width$}  {:>4}  {:>9}  {:>9}  {:>9}  {:>9}  {:>6}\n",
        "model", "k", "precision", "recall", "ndcg", "f1", "users"
    );
    for rep in reports {
        for r in &rep.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>4}  {:>9.5}  {:>9.5}  {:>9.5}  {:>9.5}  {:>6}",
                rep.model, r.cutoff, r.precision, r.recall, r.ndcg, r.f1, rep.users
            );
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct UserMetrics {
    precision: f64,
    recall: f64,
    ndcg: f64,
}

fn score_user<R: Recommender + ?Sized>(
    rec: &R,
    seq: &InteractionSequence,
    options: &EvalOptions,
    max_k: usize,
) -> Result<Option<Vec<UserMetrics>>> {
    let targets: HashSet<usize> = seq.future.iter().copied().collect();
    if targets.is_empty() {
        return Ok(None);
    }
    let exclude: Option<HashSet<usize>> = options.exclude_history.then(|| seq.history.iter().copied().collect());
    let ranked = rec.recommend(&seq.history, max_k, exclude.as_ref())?;
    let items = ranked.items();
    Ok(Some(
        options
            .cutoffs
            .iter()
            .map(|&k| UserMetrics {
                precision: precision_at_k(items, &targets, k),
                recall: recall_at_k(items, &targets, k).unwrap_or(0.0),
                ndcg: ndcg_at_k(items, &targets, k).unwrap_or(0.0),
            })
            .collect(),
    ))
}

/// Ranks once per user at the largest cutoff and averages every metric
/// across users. Per-user results are combined in input order, so the
/// report does not depend on `options.threads`.
pub fn evaluate<R: Recommender + ?Sized>(
    rec: &R,
    sequences: &[InteractionSequence],
    options: &EvalOptions,
) -> Result<MetricReport> {
    let max_k = *options
        .cutoffs
        .iter()
        .max()
        .ok_or_else(|| Error::Config("at least one cutoff is required".into()))?;
    if options.cutoffs.contains(&0) {
        return Err(Error::Config("cutoffs must be positive".into()));
    }
    let threads = options.threads.max(1).min(sequences.len().max(1));
    let per_user: Vec<Option<Vec<UserMetrics>>> = if threads == 1 {
        sequences
            .iter()
            .map(|s| score_user(rec, s, options, max_k))
            .collect::<Result<_>>()?
    } else {
        let chunk = sequences.len().div_ceil(threads);
        thread::scope(|scope| {
            let handles: Vec<_> = sequences
                .chunks(chunk)
                .map(|part| {
                    scope.spawn(move || {
                        part.iter()
                            .map(|s| score_user(rec, s, options, max_k))
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            let mut all = Vec::with_capacity(sequences.len());
            for h in handles {
                all.extend(h.join().expect("evaluation worker panicked")?);
            }
            Ok::<_, Error>(all)
        })?
    };

    let skipped = per_user.iter().filter(|u| u.is_none()).count();
    if skipped > 0 {
        log::warn!("skipped {skipped} users without target items");
    }
    let scored: Vec<&Vec<UserMetrics>> = per_user.iter().flatten().collect();
    let n = scored.len();
    let rows = options
        .cutoffs
        .iter()
        .enumerate()
        .map(|(c, &cutoff)| {
            let mean = |f: &dyn Fn(&UserMetrics) -> f64| {
                if n == 0 {
                    0.0
                } else {
                    scored.iter().map(|u| f(&u[c])).sum::<f64>() / n as f64
                }
            };
            CutoffMetrics {
                cutoff,
                precision: mean(&|u| u.precision),
                recall: mean(&|u| u.recall),
                ndcg: mean(&|u| u.ndcg),
                f1: mean(&|u| f1(u.precision, u.recall)),
            }
        })
        .collect();
    Ok(MetricReport {
        model: rec.name(),
        components: rec.components(),
        users: n,
        skipped,
        rows,
    })
}
