//! Monte Carlo plumbing: seeded block streams and estimates.
//!
//! Work is split into fixed-size blocks. Block `b` draws from a ChaCha8
//! stream keyed by `(seed, b)`, and block results are combined in block
//! order, so results are independent of the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Draws per block.
pub const BLOCK: usize = 1 << 14;

pub type McRng = ChaCha8Rng;

pub fn block_rng(seed: u64, block: u64) -> McRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Run `work(rng, first_index, count)` over `n` items in blocks and return
/// the per-block results in block order.
pub fn run_blocks<T, F>(n: usize, seed: u64, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut McRng, usize, usize) -> T + Sync,
{
    let blocks = n.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let count = BLOCK.min(n - start);
            let mut rng = block_rng(seed, b as u64);
            work(&mut rng, start, count)
        })
        .collect()
}

/// Mean, standard error, sample count and seed of a Monte Carlo quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
}

impl McEstimate {
    /// `|mean − target| / stderr`, or 0/∞ when the standard error vanishes.
    pub fn z_against(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if self.stderr > 0.0 {
            d / self.stderr
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Streaming first and second moments (Welford) with an ordered merge.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    pub n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self, seed: u64) -> McEstimate {
        McEstimate {
            mean: self.mean,
            stderr: (self.variance() / self.n.max(1) as f64).sqrt(),
            n: self.n,
            seed,
        }
    }
}

/// Hit counts for two events measured on the same draws, used for ratio
/// estimates with common random numbers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairedCounts {
    pub n: usize,
    pub num: usize,
    pub den: usize,
    pub both: usize,
}

impl PairedCounts {
    pub fn merge(&mut self, o: &PairedCounts) {
        self.n += o.n;
        self.num += o.num;
        self.den += o.den;
        self.both += o.both;
    }

    /// Ratio `P̂(A)/P̂(B)` and its delta-method standard error, accounting for
    /// the covariance of the two indicators. `None` when no draw hit `B`.
    pub fn ratio(&self) -> Option<(f64, f64)> {
        if self.den == 0 {
            return None;
        }
        let n = self.n as f64;
        let a = self.num as f64 / n;
        let b = self.den as f64 / n;
        let ab = self.both as f64 / n;
        let r = a / b;
        // variance of 1_A − r·1_B, whose mean is zero
        let var = (a - 2.0 * r * ab + r * r * b) / (b * b * n);
        Some((r, var.max(0.0).sqrt()))
    }
}
