use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios must be non-negative and sum to 1, got {}/{}/{}",
                self.train, self.valid, self.test
            )));
        }
        Ok(())
    }

    /// Split sizes for `n` items; each is within one of `ratio * n`.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let train = ((n as f64) * self.train).round() as usize;
        let valid = (((n as f64) * self.valid).round() as usize).min(n - train.min(n));
        let train = train.min(n);
        (train, valid, n - train - valid)
    }
}

/// Shuffles and partitions `items` into disjoint train/validation/test parts.
pub fn split<T, R: Rng + ?Sized>(mut items: Vec<T>, ratios: SplitRatios, rng: &mut R) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    ratios.validate()?;
    items.shuffle(rng);
    let (n_train, n_valid, _) = ratios.sizes(items.len());
    let mut rest = items.split_off(n_train);
    let test = rest.split_off(n_valid);
    Ok((items, rest, test))
}
