use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{DesignError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Batch<T> {
    pub regular: Vec<T>,
    pub designed: Vec<T>,
}

impl<T> Batch<T> {
    /// Regular half first.
    pub fn items(&self) -> impl Iterator<Item = &T> {
        self.regular.iter().chain(&self.designed)
    }

    pub fn len(&self) -> usize {
        self.regular.len() + self.designed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MixedBatches<T> {
    pub batches: Vec<Batch<T>>,
    /// Items left unused once either stream ran out.
    pub remainder_regular: usize,
    pub remainder_designed: usize,
}

/// Fills each batch with `batch_size / 2` items from each stream, taken in
/// stream order and shuffled within each half. Stops at the first batch
/// either stream cannot fill.
pub fn mix_batches<T>(regular: Vec<T>, designed: Vec<T>, batch_size: usize, seed: u64) -> Result<MixedBatches<T>> {
    if batch_size == 0 || !batch_size.is_multiple_of(2) {
        return Err(DesignError::OddBatchSize(batch_size));
    }
    let half = batch_size / 2;
    let count = (regular.len() / half).min(designed.len() / half);
    let remainder_regular = regular.len() - count * half;
    let remainder_designed = designed.len() - count * half;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = regular.into_iter();
    let mut d = designed.into_iter();
    let mut batches = Vec::with_capacity(count);
    for _ in 0..count {
        let mut regular: Vec<T> = r.by_ref().take(half).collect();
        let mut designed: Vec<T> = d.by_ref().take(half).collect();
        regular.shuffle(&mut rng);
        designed.shuffle(&mut rng);
        batches.push(Batch { regular, designed });
    }
    Ok(MixedBatches { batches, remainder_regular, remainder_designed })
}
