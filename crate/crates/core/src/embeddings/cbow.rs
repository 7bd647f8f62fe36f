use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::numerics::sigmoid;
use crate::seed::SeedStreams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CbowConfig {
    pub dim: usize,
    pub window: usize,
    pub negative_samples: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_count: usize,
    /// Frequent-item downsampling threshold; `None` disables it.
    pub subsample: Option<f64>,
    /// Train on history and future of every training sequence rather than
    /// history only.
    pub include_future: bool,
    pub seed: u64,
}

impl Default for CbowConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 5,
            negative_samples: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_count: 1,
            subsample: None,
            include_future: true,
            seed: 0,
        }
    }
}

impl CbowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.negative_samples == 0 {
            return Err(Error::Config("cbow dim, window and negative_samples must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("cbow learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Draws items with probability proportional to `count^0.75`.
#[derive(Debug, Clone)]
pub struct UnigramSampler {
    dist: WeightedIndex<f64>,
}

impl UnigramSampler {
    pub const POWER: f64 = 0.75;

    pub fn new(counts: &[u64]) -> Result<Self> {
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(Self::POWER)).collect();
        let dist = WeightedIndex::new(&weights).map_err(|_| Error::Empty("negative sampling distribution"))?;
        Ok(Self { dist })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.dist.sample(rng)
    }
}

/// Trains input vectors with the continuous bag-of-words objective and
/// negative sampling. Rows are returned unnormalized; items that never get
/// a training context keep their random initialization.
pub fn train_cbow(sequences: &[Vec<usize>], vocab_size: usize, config: &CbowConfig) -> Result<EmbeddingMatrix> {
    config.validate()?;
    if vocab_size == 0 || sequences.iter().all(Vec::is_empty) {
        return Err(Error::Empty("cbow corpus"));
    }
    let mut counts = vec![0u64; vocab_size];
    for &item in sequences.iter().flatten() {
        if item >= vocab_size {
            return Err(Error::IndexOutOfRange {
                what: "vocabulary",
                index: item,
                len: vocab_size,
            });
        }
        counts[item] += 1;
    }
    let kept = |i: usize| counts[i] >= config.min_count as u64;
    let sampler_counts: Vec<u64> = (0..vocab_size).map(|i| if kept(i) { counts[i] } else { 0 }).collect();
    let sampler = UnigramSampler::new(&sampler_counts)?;
    let total: u64 = sampler_counts.iter().sum();

    let streams = SeedStreams::new(config.seed);
    let mut rng = streams.stream("embedding");
    let dim = config.dim;
    let bound = 0.5 / dim as f64;
    let init: Vec<f64> = (0..vocab_size * dim).map(|_| rng.random_range(-bound..bound)).collect();
    let mut input = EmbeddingMatrix::new(vocab_size, dim, init)?;
    let mut output = vec![0.0; vocab_size * dim];

    let planned = (total as f64 * config.epochs as f64).max(1.0);
    let mut processed = 0.0;
    let mut hidden = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    let mut sentence = Vec::new();

    for _ in 0..config.epochs {
        for seq in sequences {
            sentence.clear();
            for &item in seq.iter().filter(|&&i| kept(i)) {
                if let Some(t) = config.subsample {
                    let freq = counts[item] as f64 / total as f64;
                    let keep_p = ((freq / t).sqrt() + 1.0) * t / freq;
                    if keep_p < rng.random::<f64>() {
                        continue;
                    }
                }
                sentence.push(item);
            }
            for pos in 0..sentence.len() {
                processed += 1.0;
                let alpha = (config.learning_rate * (1.0 - processed / planned)).max(config.learning_rate * 1e-4);
                let shrink = rng.random_range(0..config.window);
                let reach = config.window - shrink;
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sentence.len() - 1);
                let context: Vec<usize> = (lo..=hi).filter(|&c| c != pos).map(|c| sentence[c]).collect();
                if context.is_empty() {
                    continue;
                }

                hidden.iter_mut().for_each(|h| *h = 0.0);
                for &c in &context {
                    for (h, v) in hidden.iter_mut().zip(input.lookup(c)?) {
                        *h += v;
                    }
                }
                let n = context.len() as f64;
                hidden.iter_mut().for_each(|h| *h /= n);
                err.iter_mut().for_each(|e| *e = 0.0);

                let target = sentence[pos];
                for d in 0..=config.negative_samples {
                    let (item, label) = if d == 0 {
                        (target, 1.0)
                    } else {
                        let s = sampler.sample(&mut rng);
                        if s == target {
                            continue;
                        }
                        (s, 0.0)
                    };
                    let out = &mut output[item * dim..(item + 1) * dim];
                    let score: f64 = hidden.iter().zip(out.iter()).map(|(h, o)| h * o).sum();
                    let g = (label - sigmoid(score)) * alpha;
                    for k in 0..dim {
                        err[k] += g * out[k];
                        out[k] += g * hidden[k];
                    }
                }
                for &c in &context {
                    for (v, e) in input.row_mut(c).iter_mut().zip(&err) {
                        *v += e;
                    }
                }
            }
        }
    }
    Ok(input)
}
