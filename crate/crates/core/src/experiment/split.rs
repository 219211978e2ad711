use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::SparseRatings;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Fraction of ratings used for training, strictly between 0 and 1.
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_fraction > 0.0 && self.train_fraction < 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidSplit(format!(
                "train fraction must lie strictly between 0 and 1, got {}",
                self.train_fraction
            )))
        }
    }
}

/// Uniform random partition of the rating entries.
///
/// Entry positions are shuffled with a ChaCha8 stream seeded by `spec.seed`;
/// the first `round(x * N)` go to training. Both halves keep the full user and
/// item dimensions.
pub fn split(ratings: &SparseRatings, spec: SplitSpec) -> Result<(SparseRatings, SparseRatings)> {
    spec.validate()?;
    let total = ratings.len();
    let n_train = (spec.train_fraction * total as f64).round() as usize;
    if n_train == 0 || n_train >= total {
        return Err(Error::InvalidSplit(format!(
            "fraction {} of {total} ratings leaves an empty train or test set",
            spec.train_fraction
        )));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let (train, test) = order.split_at(n_train);
    Ok((ratings.select(train), ratings.select(test)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What a derived seed is used for within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedPurpose {
    Split = 0,
    Init = 1,
}

/// Seed for one run of an experiment.
///
/// Folds `base_seed`, the bit pattern of the train fraction, the run index and
/// the purpose through SplitMix64 in that order. Every method sees the same
/// split and initialization seeds for a given `(fraction, run)`.
pub fn derive_seed(base_seed: u64, train_fraction: f64, run: usize, purpose: SeedPurpose) -> u64 {
    let mut s = splitmix64(base_seed);
    s = splitmix64(s ^ train_fraction.to_bits());
    s = splitmix64(s ^ run as u64);
    splitmix64(s ^ purpose as u64)
}
