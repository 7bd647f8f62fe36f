//! Interaction logs, history/future splits, vocabularies and synthetic
//! corpora.

mod persist;
mod raw;
mod split;
pub mod synthetic;
mod vocab;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use persist::{load_bundle, save_bundle};
pub use raw::{
    parse_clicks, parse_ratings, preprocess_movielens, preprocess_recsys, read_clicks, read_ratings, ClickRow, ColumnMapping,
    MovieLensConfig, RatingRow, RecsysConfig, Timestamp,
};
pub use split::{split, SplitRatios};
pub use synthetic::{cluster_separation, generate_synthetic, SyntheticConfig, SyntheticDataset, SyntheticLayout};
pub use vocab::ItemVocabulary;

use crate::error::Result;
use crate::seed::SeedStreams;

/// A user's chronological items split into history and future.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionSequence {
    pub user: String,
    pub history: Vec<usize>,
    pub future: Vec<usize>,
}

impl InteractionSequence {
    /// History followed by future.
    pub fn items(&self) -> impl Iterator<Item = usize> + '_ {
        self.history.iter().chain(&self.future).copied()
    }
}

/// A sequence whose items are still raw tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSequence {
    pub user: String,
    pub history: Vec<String>,
    pub future: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub source: String,
    pub params: BTreeMap<String, String>,
    pub split_seed: u64,
    /// Sequences per split before out-of-vocabulary filtering.
    pub split_sizes: [usize; 3],
    /// Validation/test items removed because training never saw them.
    pub dropped_items: usize,
    /// Validation/test sequences removed because a side became empty.
    pub dropped_sequences: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub train: Vec<InteractionSequence>,
    pub valid: Vec<InteractionSequence>,
    pub test: Vec<InteractionSequence>,
    pub vocab: ItemVocabulary,
    pub provenance: Provenance,
}

impl DatasetBundle {
    /// Splits raw sequences, builds the vocabulary from the training part
    /// only and maps every split onto it.
    pub fn assemble(
        sequences: Vec<RawSequence>,
        ratios: SplitRatios,
        seed: u64,
        source: &str,
        params: BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut rng = SeedStreams::new(seed).stream("split");
        let (train_raw, valid_raw, test_raw) = split(sequences, ratios, &mut rng)?;

        let mut vocab = ItemVocabulary::new();
        for s in &train_raw {
            for t in s.history.iter().chain(&s.future) {
                vocab.insert(t);
            }
        }

        let train = train_raw
            .iter()
            .map(|s| InteractionSequence {
                user: s.user.clone(),
                history: s.history.iter().map(|t| vocab.insert(t)).collect(),
                future: s.future.iter().map(|t| vocab.insert(t)).collect(),
            })
            .collect();

        let mut provenance = Provenance {
            source: source.to_string(),
            params,
            split_seed: seed,
            split_sizes: [train_raw.len(), valid_raw.len(), test_raw.len()],
            dropped_items: 0,
            dropped_sequences: 0,
        };
        let valid = map_known(&valid_raw, &vocab, &mut provenance);
        let test = map_known(&test_raw, &vocab, &mut provenance);
        if provenance.dropped_items > 0 {
            log::info!(
                "dropped {} out-of-vocabulary items and {} sequences from validation/test",
                provenance.dropped_items,
                provenance.dropped_sequences
            );
        }

        Ok(Self {
            train,
            valid,
            test,
            vocab,
            provenance,
        })
    }

    pub fn train_item_sequences(&self, include_future: bool) -> Vec<Vec<usize>> {
        self.train
            .iter()
            .map(|s| {
                if include_future {
                    s.items().collect()
                } else {
                    s.history.clone()
                }
            })
            .collect()
    }
}

fn map_known(raw: &[RawSequence], vocab: &ItemVocabulary, prov: &mut Provenance) -> Vec<InteractionSequence> {
    let mut out = Vec::with_capacity(raw.len());
    for s in raw {
        let mut map = |items: &[String]| -> Vec<usize> {
            items
                .iter()
                .filter_map(|t| {
                    let idx = vocab.get(t);
                    if idx.is_none() {
                        prov.dropped_items += 1;
                    }
                    idx
                })
                .collect()
        };
        let history = map(&s.history);
        let future = map(&s.future);
        if history.is_empty() || future.is_empty() {
            prov.dropped_sequences += 1;
            continue;
        }
        out.push(InteractionSequence {
            user: s.user.clone(),
            history,
            future,
        });
    }
    out
}
