//! Seeded random streams.
//!
//! Streams are ChaCha8 keyed by a 64-bit seed through
//! `SeedableRng::seed_from_u64`, so a seed names the same sequence on every
//! platform. Gaussian variates use `rand_distr::StandardNormal`. Child
//! streams for parallel trials come from [`Seed::derive`], never from
//! sharing one stream across tasks.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    /// Seed of the `index`-th child stream: a SplitMix64 mix of
    /// `(self, index)`.
    pub fn derive(self, index: u64) -> Seed {
        Seed(splitmix64(self.0 ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019))))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A single-owner deterministic variate stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: Seed) -> Self {
        RngStream {
            rng: ChaCha8Rng::seed_from_u64(seed.0),
        }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_range(&mut self, lo: usize, hi: usize) -> usize {
        self.rng.random_range(lo..=hi)
    }

    pub fn gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn gaussian_vector(&mut self, d: usize) -> DVector<f64> {
        DVector::from_fn(d, |_, _| self.gaussian())
    }

    /// Uniform direction on the unit sphere in R^d.
    pub fn unit_vector(&mut self, d: usize) -> DVector<f64> {
        loop {
            let v = self.gaussian_vector(d);
            let n = v.norm();
            if n > 1e-12 {
                return v / n;
            }
        }
    }

    /// Uniform point in the closed ball of the given radius in R^d.
    pub fn in_ball(&mut self, d: usize, radius: f64) -> DVector<f64> {
        let dir = self.unit_vector(d);
        let r = radius * self.uniform().powf(1.0 / d as f64);
        dir * r
    }

    /// Uniform point in the cube `[-half, half]^d`.
    pub fn in_cube(&mut self, d: usize, half: f64) -> Vec<f64> {
        (0..d).map(|_| self.uniform_range(-half, half)).collect()
    }
}
