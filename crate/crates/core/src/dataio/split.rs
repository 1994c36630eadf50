use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, Split};
use crate::{Error, Result};

/// Fractions of samples assigned to train, validation and test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

/// 70/15/15 by image.
pub const DEFAULT_SPLIT: SplitFractions = SplitFractions {
    train: 0.7,
    val: 0.15,
    test: 0.15,
};

impl Default for SplitFractions {
    fn default() -> Self {
        DEFAULT_SPLIT
    }
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let f = Self { train, val, test };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Argument(format!(
                "split fractions must be finite and non-negative, got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }

    /// Partition sizes for `n` samples.
    ///
    /// Each split first receives `floor(fraction · n)` samples. The leftover
    /// samples go one each to the splits with the largest fractional parts;
    /// ties are broken in the order train, val, test.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let exact = [self.train, self.val, self.test].map(|f| f * n as f64);
        let mut sizes = exact.map(|x| x.floor() as usize);
        let assigned: usize = sizes.iter().sum();
        let mut leftover = n.saturating_sub(assigned);
        // Quantise remainders so float noise does not break ties.
        let rem = |i: usize| ((exact[i] - exact[i].floor()) * 1e9).round() as i64;
        let mut order = [0usize, 1, 2];
        order.sort_by_key(|&i| (std::cmp::Reverse(rem(i)), i));
        for &i in order.iter().cycle() {
            if leftover == 0 {
                break;
            }
            sizes[i] += 1;
            leftover -= 1;
        }
        sizes
    }
}

/// Assigns every sample to exactly one split after a seeded shuffle.
pub fn split_dataset(
    manifest: &DatasetManifest,
    fractions: SplitFractions,
    seed: u64,
) -> Result<DatasetManifest> {
    fractions.validate()?;
    let n = manifest.len();
    let [n_train, n_val, _] = fractions.sizes(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut assignment = vec![Split::Test; n];
    for (rank, &idx) in order.iter().enumerate() {
        assignment[idx] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    let mut out = manifest.clone();
    out.split_assignment = Some(assignment);
    Ok(out)
}
