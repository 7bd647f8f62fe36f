use std::collections::HashSet;

use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::mdn::MixtureParameters;

/// Top-k items with non-increasing scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedRecommendations {
    items: Vec<usize>,
    scores: Vec<f64>,
}

impl RankedRecommendations {
    /// Checks that items are unique and scores never increase.
    pub fn new(items: Vec<usize>, scores: Vec<f64>) -> Result<Self> {
        if items.len() != scores.len() {
            return Err(Error::ShapeMismatch {
                op: "ranked_recommendations",
                left: vec![items.len()],
                right: vec![scores.len()],
            });
        }
        let mut seen = HashSet::new();
        if let Some(&dup) = items.iter().find(|&&i| !seen.insert(i)) {
            return Err(Error::InvalidOperand {
                op: "ranked_recommendations",
                message: format!("item {dup} appears twice"),
            });
        }
        if scores.windows(2).any(|w| !(w[0] >= w[1])) {
            return Err(Error::InvalidOperand {
                op: "ranked_recommendations",
                message: "scores must be non-increasing".into(),
            });
        }
        Ok(Self { items, scores })
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Keeps the `k` best-scored items not in `exclude`. Ties go to the smaller
/// index; `k` beyond the number of candidates is clamped with a warning.
pub fn rank_scores(scores: &[f64], k: usize, exclude: Option<&HashSet<usize>>) -> Result<RankedRecommendations> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite {
            context: format!("score of item {i}"),
        });
    }
    let mut order: Vec<usize> = (0..scores.len())
        .filter(|i| exclude.is_none_or(|ex| !ex.contains(i)))
        .collect();
    if k > order.len() {
        log::warn!("k = {k} exceeds the {} rankable items; clamping", order.len());
    }
    let k = k.min(order.len());
    let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if k < order.len() && k > 0 {
        order.select_nth_unstable_by(k - 1, cmp);
        order.truncate(k);
    }
    order.sort_by(cmp);
    let s = order.iter().map(|&i| scores[i]).collect();
    RankedRecommendations::new(order, s)
}

/// Log-density of every item vector under `params`.
pub fn score_items(params: &MixtureParameters, e: &EmbeddingMatrix) -> Result<Vec<f64>> {
    if params.dim() != e.dim() {
        return Err(Error::ShapeMismatch {
            op: "rank_items",
            left: vec![params.dim()],
            right: vec![e.dim()],
        });
    }
    let mut scorer = params.scorer()?;
    Ok(e.rows().map(|v| scorer.log_density(v)).collect())
}

/// The `k` items with the highest log-density under `params`.
pub fn rank_items(
    params: &MixtureParameters,
    e: &EmbeddingMatrix,
    k: usize,
    exclude: Option<&HashSet<usize>>,
) -> Result<RankedRecommendations> {
    rank_scores(&score_items(params, e)?, k, exclude)
}
