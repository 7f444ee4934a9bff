use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Train/validation/test fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn check(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidRatios(format!(
                "ratios must be finite and non-negative, got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidRatios(format!(
                "ratios sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Partitions frames at random into (train, val, test).
///
/// Val and test receive `floor(ratio * n)` frames; the remainder goes to
/// train. The permutation depends only on `seed`, and each output keeps the
/// input order of its frames.
pub fn split(d: &Dataset, ratios: SplitRatios, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    ratios.check()?;
    let n = d.frames.len();
    // Slack so that e.g. 0.1 * 10 floors to 1 despite rounding.
    let count = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
    let n_val = count(ratios.val).min(n);
    let n_test = count(ratios.test).min(n - n_val);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let take = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        Dataset::new(idx.into_iter().map(|i| d.frames[i].clone()).collect())
    };
    let val = take(&order[..n_val]);
    let test = take(&order[n_val..n_val + n_test]);
    let train = take(&order[n_val + n_test..]);
    Ok((train, val, test))
}
