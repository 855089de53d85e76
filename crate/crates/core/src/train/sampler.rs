use super::TrainError;
use alloc::vec::Vec;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

/// Draws indices with replacement, each class weighted by its inverse
/// frequency so batches are balanced in expectation.
#[derive(Debug, Clone)]
pub struct WeightedSampler {
    weights: Vec<f64>,
    dist: WeightedIndex<f64>,
}

impl WeightedSampler {
    pub fn new(labels: &[bool]) -> Result<Self, TrainError> {
        let positives = labels.iter().filter(|&&l| l).count();
        let negatives = labels.len() - positives;
        if positives == 0 || negatives == 0 {
            return Err(TrainError::Config("weighted sampling needs both classes"));
        }
        let weights: Vec<f64> = labels
            .iter()
            .map(|&l| 1.0 / if l { positives } else { negatives } as f64)
            .collect();
        let dist = WeightedIndex::new(&weights).map_err(|_| TrainError::Config("invalid sampling weights"))?;
        Ok(Self { weights, dist })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn batch<R: Rng + ?Sized>(&self, rng: &mut R, batch_size: usize) -> Vec<usize> {
        (0..batch_size).map(|_| self.dist.sample(rng)).collect()
    }

    pub fn batches<R: Rng + ?Sized>(&self, rng: &mut R, n_batches: usize, batch_size: usize) -> Vec<Vec<usize>> {
        (0..n_batches).map(|_| self.batch(rng, batch_size)).collect()
    }
}

/// Convenience form: the index batches for one epoch.
pub fn weighted_sampler<R: Rng + ?Sized>(
    labels: &[bool],
    rng: &mut R,
    batch_size: usize,
) -> Result<Vec<Vec<usize>>, TrainError> {
    if batch_size == 0 {
        return Err(TrainError::Config("batch size must be positive"));
    }
    let sampler = WeightedSampler::new(labels)?;
    Ok(sampler.batches(rng, labels.len().div_ceil(batch_size), batch_size))
}
