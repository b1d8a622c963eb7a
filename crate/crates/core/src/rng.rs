//! Counter-based random streams.
//!
//! A stream is identified by `(seed, phase, iteration, sample)`; those four
//! words form the ChaCha key, and the draw index is the position within the
//! keystream. Two streams with the same tags produce the same sequence no
//! matter which thread evaluates them or in what order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::Tensor;

/// Well-known phase tags. Sub-phases are derived with [`RngStream::fork`].
pub mod phase {
    pub const INIT: u64 = 1;
    pub const DATA: u64 = 2;
    pub const GENERATOR: u64 = 3;
    pub const PRIOR: u64 = 4;
    pub const REVERSE: u64 = 5;
    pub const COUPLED: u64 = 6;
    pub const OOD: u64 = 7;
    pub const EVAL: u64 = 8;
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    phase: u64,
    iteration: u64,
    sample: u64,
    rng: ChaCha8Rng,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::keyed(seed, 0, 0, 0)
    }

    fn keyed(seed: u64, phase: u64, iteration: u64, sample: u64) -> Self {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&phase.to_le_bytes());
        key[16..24].copy_from_slice(&iteration.to_le_bytes());
        key[24..32].copy_from_slice(&sample.to_le_bytes());
        RngStream {
            seed,
            phase,
            iteration,
            sample,
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tags(&self) -> (u64, u64, u64) {
        (self.phase, self.iteration, self.sample)
    }

    /// Fresh stream with `phase` replaced; iteration and sample reset.
    pub fn with_phase(&self, phase: u64) -> Self {
        Self::keyed(self.seed, phase, 0, 0)
    }

    /// Fresh stream in a sub-phase derived from the current phase and `label`.
    pub fn fork(&self, label: u64) -> Self {
        let phase = splitmix(self.phase ^ splitmix(label));
        Self::keyed(self.seed, phase, self.iteration, self.sample)
    }

    pub fn at_iteration(&self, iteration: u64) -> Self {
        Self::keyed(self.seed, self.phase, iteration, self.sample)
    }

    pub fn for_sample(&self, sample: u64) -> Self {
        Self::keyed(self.seed, self.phase, self.iteration, sample)
    }

    /// Number of 32-bit words consumed so far.
    pub fn draw_index(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn next_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn next_uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_normal();
        }
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next_normal()).collect()
    }
}

/// `n` standard-normal draws as a rank-1 tensor.
pub fn draw_normal(stream: &mut RngStream, n: usize) -> Tensor {
    assert!(n > 0, "draw_normal requires n > 0");
    Tensor::from_vec(stream.normal_vec(n)).expect("normal draws are finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_tags_identical_draws() {
        let a = draw_normal(&mut RngStream::new(7).with_phase(phase::EVAL).for_sample(3), 64);
        let b = draw_normal(&mut RngStream::new(7).with_phase(phase::EVAL).for_sample(3), 64);
        assert_eq!(a, b);
        let c = draw_normal(&mut RngStream::new(7).with_phase(phase::EVAL).for_sample(4), 64);
        assert_ne!(a, c);
    }

    #[test]
    fn moments_at_large_n() {
        let n = 100_000;
        let x = draw_normal(&mut RngStream::new(0), n);
        let mean = x.data().iter().sum::<f64>() / n as f64;
        let var = x.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn disjoint_tags_are_uncorrelated() {
        let n = 100_000;
        let base = RngStream::new(0).with_phase(phase::DATA);
        let a = draw_normal(&mut base.for_sample(1), n);
        let b = draw_normal(&mut base.fork(9).for_sample(1), n);
        let c = draw_normal(&mut base.at_iteration(1).for_sample(1), n);
        for (x, y) in [(&a, &b), (&a, &c), (&b, &c)] {
            let r = correlation(x.data(), y.data());
            assert!(r.abs() < 0.02, "correlation {r}");
        }
    }

    #[test]
    fn order_of_evaluation_does_not_matter() {
        let base = RngStream::new(11).with_phase(phase::REVERSE);
        let forward: Vec<f64> = (0..8).map(|i| base.for_sample(i).next_normal()).collect();
        let mut backward: Vec<f64> = (0..8).rev().map(|i| base.for_sample(i).next_normal()).collect();
        backward.reverse();
        assert_eq!(forward, backward);
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }
}
