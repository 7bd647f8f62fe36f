use std::collections::HashSet;

fn hits(ranked: &[usize], k: usize, targets: &HashSet<usize>) -> usize {
    ranked.iter().take(k).filter(|i| targets.contains(i)).count()
}

/// `|R_k ∩ T| / k`.
pub fn precision_at_k(ranked: &[usize], targets: &HashSet<usize>, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    hits(ranked, k, targets) as f64 / k as f64
}

/// `|R_k ∩ T| / |T|`, or `None` for an empty target set.
pub fn recall_at_k(ranked: &[usize], targets: &HashSet<usize>, k: usize) -> Option<f64> {
    if targets.is_empty() {
        return None;
    }
    Some(hits(ranked, k, targets) as f64 / targets.len() as f64)
}

/// `Σ_{i≤k} 1(r_i ∈ T) / log2(i + 1)` over `Σ_{i≤|T|} 1 / log2(i + 1)`.
pub fn ndcg_at_k(ranked: &[usize], targets: &HashSet<usize>, k: usize) -> Option<f64> {
    if targets.is_empty() {
        return None;
    }
    let gain = |pos: usize| 1.0 / ((pos + 2) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| targets.contains(i))
        .map(|(pos, _)| gain(pos))
        .sum();
    let ideal: f64 = (0..targets.len()).map(gain).sum();
    Some(dcg / ideal)
}

/// Harmonic mean, zero when both inputs are zero.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}
