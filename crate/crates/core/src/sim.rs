//! Reproducible trajectory sampling.
//!
//! Trials are split into fixed-size blocks; block `b` draws from a ChaCha8
//! stream `b` keyed by the master seed, so results do not depend on how many
//! threads process the blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chain::StochasticMatrix;

pub(crate) const BLOCK_SIZE: u64 = 4096;

pub(crate) fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Runs `trials` independent trials in seeded blocks and returns their
/// outputs in trial order.
pub(crate) fn run_trials<T, F>(trials: u64, seed: u64, trial: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync,
{
    let blocks = trials.div_ceil(BLOCK_SIZE);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, b);
            let count = BLOCK_SIZE.min(trials - b * BLOCK_SIZE);
            (0..count).map(|_| trial(&mut rng)).collect::<Vec<T>>()
        })
        .flatten_iter()
        .collect()
}

/// Inverse-CDF sampling from a probability vector.
#[derive(Debug, Clone)]
pub struct CdfSampler {
    cdf: Vec<f64>,
    last_positive: usize,
}

impl CdfSampler {
    pub fn new(probs: &[f64]) -> Self {
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let last_positive = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        Self { cdf, last_positive }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c <= u);
        i.min(self.last_positive)
    }
}

/// One inverse-CDF sampler per row of a stochastic matrix.
#[derive(Debug, Clone)]
pub struct RowSampler {
    rows: Vec<CdfSampler>,
}

impl RowSampler {
    pub fn new(p: &StochasticMatrix) -> Self {
        Self { rows: (0..p.n()).map(|i| CdfSampler::new(p.row(i))).collect() }
    }

    pub fn step<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        self.rows[from].sample(rng)
    }

    /// Path `x_0 = start, x_1, ..., x_len`.
    pub fn path<R: Rng + ?Sized>(&self, start: usize, len: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(len + 1);
        out.push(start);
        for _ in 0..len {
            let next = self.step(*out.last().unwrap(), rng);
            out.push(next);
        }
        out
    }
}
