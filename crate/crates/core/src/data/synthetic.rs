//! Synthetic corpora with known multimodal structure.
//!
//! Items live in unit-norm clusters. Every sequence has a latent type that
//! fixes which clusters its future items come from:
//!
//! * `Hub`: the history is drawn from a hub cluster; future items come from
//!   `modality` target clusters arranged on a cone around the hub, so the
//!   hub sits between the modes.
//! * `Ordered`: the history ends with one item from each of two clusters;
//!   their order selects the future clusters.
//! * `MultiCue`: the history holds one cue item per slot, scattered among
//!   filler items. Each of the `modality` slots has `types` cue variants and
//!   the variant present selects that slot's future cluster.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DatasetBundle, RawSequence, SplitRatios};
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::seed::{Rng, SeedStreams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticLayout {
    Hub,
    Ordered,
    MultiCue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub layout: SyntheticLayout,
    pub vocab_size: usize,
    pub sequences: usize,
    /// Hub/Ordered: number of history types. MultiCue: variants per slot.
    pub types: usize,
    /// Future clusters per history type (per order for `Ordered`).
    pub modality: usize,
    pub history_len: usize,
    pub future_len: usize,
    /// Embedding dimension; `None` uses the smallest that fits the layout.
    pub dim: Option<usize>,
    /// Within-cluster noise relative to the unit cluster center.
    pub spread: f64,
    /// Zipf exponent of future-item popularity inside a target cluster,
    /// ranked by closeness to the center.
    pub core_focus: f64,
    /// Required cosine distance between cluster mean directions.
    pub min_separation: f64,
    pub ratios: SplitRatios,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            layout: SyntheticLayout::Hub,
            vocab_size: 200,
            sequences: 2000,
            types: 8,
            modality: 2,
            history_len: 8,
            future_len: 5,
            dim: None,
            spread: 0.2,
            core_focus: 1.0,
            min_separation: 0.5,
            ratios: SplitRatios::default(),
            seed: 0,
        }
    }
}

/// Polar cosine between the hub and each target on the cone.
const CONE_COS: f64 = 0.3;

/// A generated corpus with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub bundle: DatasetBundle,
    /// Unit-norm vectors in `bundle.vocab` order.
    pub embeddings: EmbeddingMatrix,
    /// Cluster of every vocabulary item.
    pub item_clusters: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// Target clusters of every user.
    pub sequence_modes: BTreeMap<String, Vec<usize>>,
}

struct Plan {
    dim: usize,
    centers: Vec<Vec<f64>>,
}

/// Rows of the normalized Sylvester Hadamard matrix of order `n` (a power
/// of two): orthonormal, every entry is `±1/sqrt(n)`.
fn hadamard(n: usize) -> Vec<Vec<f64>> {
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|r| {
            (0..n)
                .map(|c| if (r & c).count_ones() % 2 == 0 { scale } else { -scale })
                .collect()
        })
        .collect()
}

fn combine(terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = vec![0.0; terms[0].1.len()];
    for (w, v) in terms {
        out.iter_mut().zip(*v).for_each(|(o, x)| *o += w * x);
    }
    out
}

impl SyntheticConfig {
    fn check(&self) -> Result<()> {
        if self.modality == 0 {
            return Err(Error::Config("modality must be at least 1".into()));
        }
        if self.types == 0 || self.sequences == 0 || self.future_len == 0 {
            return Err(Error::Config("types, sequences and future_len must be positive".into()));
        }
        if self.history_len < self.min_history() {
            return Err(Error::Config(format!(
                "history_len must be at least {} for this layout",
                self.min_history()
            )));
        }
        if !(self.spread >= 0.0) || !(self.core_focus >= 0.0) {
            return Err(Error::Config("spread and core_focus must be non-negative".into()));
        }
        self.ratios.validate()
    }

    fn min_history(&self) -> usize {
        match self.layout {
            SyntheticLayout::Hub => 1,
            SyntheticLayout::Ordered => 2,
            SyntheticLayout::MultiCue => self.modality,
        }
    }

    fn clusters(&self) -> usize {
        let (t, m) = (self.types, self.modality);
        match self.layout {
            SyntheticLayout::Hub => t * (1 + m),
            SyntheticLayout::Ordered => t * (2 + 2 * m) + 1,
            SyntheticLayout::MultiCue => 2 * t * m + 1,
        }
    }

    fn directions(&self) -> usize {
        match self.layout {
            SyntheticLayout::Hub => self.types * (1 + self.modality.div_ceil(2)),
            _ => self.clusters(),
        }
    }

    fn plan(&self) -> Result<Plan> {
        let (t, m) = (self.types, self.modality);
        let needed = self.directions();
        let dim = match self.dim {
            None => needed.next_power_of_two(),
            Some(d) if d < needed => {
                return Err(Error::Geometry(format!(
                    "{} clusters need {needed} orthogonal directions, only {d} dimensions available",
                    self.clusters()
                )))
            }
            Some(d) if !d.is_power_of_two() => {
                return Err(Error::Config(format!("synthetic dim must be a power of two, got {d}")))
            }
            Some(d) => d,
        };
        let rows = hadamard(dim);
        let centers = match self.layout {
            SyntheticLayout::Hub => {
                let q = 1 + m.div_ceil(2);
                let s = (1.0 - CONE_COS * CONE_COS).sqrt();
                let mut centers = Vec::new();
                for b in 0..t {
                    let hub = &rows[b * q];
                    centers.push(hub.clone());
                    for j in 0..m {
                        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                        centers.push(combine(&[(CONE_COS, hub), (sign * s, &rows[b * q + 1 + j / 2])]));
                    }
                }
                centers
            }
            _ => rows[..self.clusters()].to_vec(),
        };
        Ok(Plan { dim, centers })
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Smallest cosine distance between the mean directions of two clusters.
pub fn cluster_separation(e: &EmbeddingMatrix, labels: &[usize]) -> f64 {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut means = vec![vec![0.0; e.dim()]; k];
    for (row, &c) in e.rows().zip(labels) {
        means[c].iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    let mut best = f64::INFINITY;
    for a in 0..k {
        for b in a + 1..k {
            if means[a].iter().any(|&v| v != 0.0) && means[b].iter().any(|&v| v != 0.0) {
                best = best.min(1.0 - cosine(&means[a], &means[b]));
            }
        }
    }
    best
}

struct Items {
    vectors: Vec<Vec<f64>>,
    // per cluster: member item ids, closest to the center first
    members: Vec<Vec<usize>>,
    popularity: Vec<WeightedIndex<f64>>,
}

impl Items {
    fn uniform(&self, cluster: usize, rng: &mut Rng) -> usize {
        *self.members[cluster].choose(rng).expect("non-empty cluster")
    }

    fn popular(&self, cluster: usize, rng: &mut Rng) -> usize {
        self.members[cluster][self.popularity[cluster].sample(rng)]
    }
}

fn make_items(cfg: &SyntheticConfig, plan: &Plan, rng: &mut Rng) -> Result<Items> {
    let k = plan.centers.len();
    let sd = cfg.spread / (plan.dim as f64).sqrt();
    if cfg.vocab_size < 2 * k {
        return Err(Error::Geometry(format!(
            "{k} clusters need at least {} items, vocabulary has {}",
            2 * k,
            cfg.vocab_size
        )));
    }
    let mut vectors = Vec::with_capacity(cfg.vocab_size);
    let mut members = vec![Vec::new(); k];
    for i in 0..cfg.vocab_size {
        let c = i % k;
        let mut v = plan.centers[c].clone();
        for x in &mut v {
            let z: f64 = StandardNormal.sample(rng);
            *x += sd * z;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        members[c].push(i);
        vectors.push(v);
    }
    for (c, m) in members.iter_mut().enumerate() {
        m.sort_by(|&a, &b| cosine(&vectors[b], &plan.centers[c]).total_cmp(&cosine(&vectors[a], &plan.centers[c])));
    }
    let popularity = members
        .iter()
        .map(|m| {
            let w: Vec<f64> = (0..m.len()).map(|r| (r as f64 + 1.0).powf(-cfg.core_focus)).collect();
            WeightedIndex::new(w).expect("positive weights")
        })
        .collect();
    Ok(Items {
        vectors,
        members,
        popularity,
    })
}

/// Builds the clusters, samples sequences, splits them and checks that the
/// clusters stay separated.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.check()?;
    let plan = cfg.plan()?;
    let mut rng = SeedStreams::new(cfg.seed).stream("synthetic");
    let items = make_items(cfg, &plan, &mut rng)?;
    let (t, m) = (cfg.types, cfg.modality);

    let mut raw = Vec::with_capacity(cfg.sequences);
    let mut modes = BTreeMap::new();
    for u in 0..cfg.sequences {
        let user = format!("s{u:05}");
        let (history, targets): (Vec<usize>, Vec<usize>) = match cfg.layout {
            SyntheticLayout::Hub => {
                let ty = rng.random_range(0..t);
                let base = ty * (1 + m);
                let h = (0..cfg.history_len).map(|_| items.uniform(base, &mut rng)).collect();
                (h, (1..=m).map(|j| base + j).collect())
            }
            SyntheticLayout::Ordered => {
                let ty = rng.random_range(0..t);
                let base = ty * (2 + 2 * m);
                let filler = t * (2 + 2 * m);
                let mut h: Vec<usize> = (0..cfg.history_len - 2).map(|_| items.uniform(filler, &mut rng)).collect();
                let (x, y) = (items.uniform(base, &mut rng), items.uniform(base + 1, &mut rng));
                let forward = rng.random_bool(0.5);
                if forward {
                    h.extend([x, y]);
                } else {
                    h.extend([y, x]);
                }
                let first = base + 2 + if forward { 0 } else { m };
                (h, (first..first + m).collect())
            }
            SyntheticLayout::MultiCue => {
                let filler = 2 * t * m;
                let variants: Vec<usize> = (0..m).map(|_| rng.random_range(0..t)).collect();
                let mut h: Vec<usize> = (0..cfg.history_len - m).map(|_| items.uniform(filler, &mut rng)).collect();
                for (slot, v) in variants.iter().enumerate() {
                    let at = rng.random_range(0..=h.len());
                    h.insert(at, items.uniform(slot * t + v, &mut rng));
                }
                (h, variants.iter().enumerate().map(|(slot, v)| t * m + slot * t + v).collect())
            }
        };
        let future = (0..cfg.future_len)
            .map(|_| items.popular(targets[rng.random_range(0..targets.len())], &mut rng))
            .collect::<Vec<_>>();
        let token = |i: &usize| format!("i{i:04}");
        raw.push(RawSequence {
            user: user.clone(),
            history: history.iter().map(token).collect(),
            future: future.iter().map(token).collect(),
        });
        modes.insert(user, targets);
    }

    let params = BTreeMap::from([
        ("layout".to_string(), serde_json::to_string(&cfg.layout)?.trim_matches('"').to_string()),
        ("config".to_string(), serde_json::to_string(cfg)?),
    ]);
    let bundle = DatasetBundle::assemble(raw, cfg.ratios, cfg.seed, "synthetic", params)?;
    let mut rows = Vec::with_capacity(bundle.vocab.len());
    let mut item_clusters = Vec::with_capacity(bundle.vocab.len());
    for tok in bundle.vocab.tokens() {
        let id: usize = tok[1..].parse().expect("generated token");
        rows.push(items.vectors[id].clone());
        item_clusters.push(id % plan.centers.len());
    }
    let embeddings = EmbeddingMatrix::from_rows(&rows)?;
    let sep = cluster_separation(&embeddings, &item_clusters);
    if sep < cfg.min_separation {
        return Err(Error::Geometry(format!(
            "closest clusters are {sep:.3} apart in cosine distance, below {}",
            cfg.min_separation
        )));
    }
    if bundle.vocab.len() < cfg.vocab_size {
        log::info!(
            "{} of {} synthetic items never occur in training sequences",
            cfg.vocab_size - bundle.vocab.len(),
            cfg.vocab_size
        );
    }
    Ok(SyntheticDataset {
        bundle,
        embeddings,
        item_clusters,
        centers: plan.centers,
        sequence_modes: modes,
    })
}
