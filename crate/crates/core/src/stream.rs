//! Seeded, splittable random streams.
//!
//! A [`RandomStream`] is identified by `(seed, stream_id)`. Both values feed a
//! ChaCha8 generator: the seed keys the cipher and the stream id selects one of
//! its 2^64 independent streams. Parallel work never shares a stream; it derives
//! children with [`RandomStream::child`], so results depend only on the trial
//! index and not on scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use num_complex::Complex64;

#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
    draws: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
            draws: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Derives the stream for child `index` without consuming any draws from `self`.
    pub fn child(&self, index: u64) -> Self {
        let id = splitmix64(splitmix64(self.stream_id) ^ index);
        Self::new(self.seed, id)
    }

    /// Number of 32/64-bit words consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Standard complex Gaussian: real and imaginary parts i.i.d. N(0, 1/2).
    pub fn complex_normal(&mut self) -> Complex64 {
        let re: f64 = self.sample(StandardNormal);
        let im: f64 = self.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }

    /// Uniform index in `0..n`. Panics if `n == 0`.
    pub fn index(&mut self, n: usize) -> usize {
        self.random_range(0..n)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.draws += 1;
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.draws += dst.len().div_ceil(8) as u64;
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_identity_gives_identical_draws() {
        let mut a = RandomStream::new(7, 3);
        let mut b = RandomStream::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_eq!(a.draws(), 100);
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = RandomStream::new(7, 3);
        let mut b = RandomStream::new(7, 4);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn child_does_not_consume_parent() {
        let parent = RandomStream::new(1, 0);
        let c1 = parent.child(5);
        let c2 = parent.child(5);
        assert_eq!(c1.stream_id(), c2.stream_id());
        assert_ne!(parent.child(5).stream_id(), parent.child(6).stream_id());
        assert_eq!(parent.draws(), 0);
    }

    #[test]
    fn complex_normal_has_unit_second_moment() {
        let mut s = RandomStream::new(11, 0);
        let n = 200_000;
        let (mut m2, mut re2, mut mean) = (0.0, 0.0, Complex64::new(0.0, 0.0));
        for _ in 0..n {
            let z = s.complex_normal();
            m2 += z.norm_sqr();
            re2 += z.re * z.re;
            mean += z;
        }
        let n = n as f64;
        assert!((m2 / n - 1.0).abs() < 0.01);
        assert!((re2 / n - 0.5).abs() < 0.01);
        assert!((mean / n).norm() < 0.01);
    }
}
