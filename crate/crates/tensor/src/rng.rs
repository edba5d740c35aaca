//! Counter-based random streams.
//!
//! Every draw is a pure function of `(seed, stream, counter)`, so masking,
//! Gumbel noise, and parameter init can each own an independent stream and
//! replay identically on any platform.

use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    counter: u64,
}

// SplitMix64 finalizer: full-avalanche 64-bit mix.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0, counter: 0 }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        Self { seed, stream, counter: 0 }
    }

    /// Derive an independent child stream; the parent is unaffected.
    pub fn substream(&self, label: u64) -> Self {
        Self {
            seed: self.seed,
            stream: mix(self.stream.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(label) ^ 0xa5a5a5a5a5a5a5a5),
            counter: 0,
        }
    }

    pub fn state(&self) -> (u64, u64, u64) {
        (self.seed, self.stream, self.counter)
    }

    pub fn from_state(seed: u64, stream: u64, counter: u64) -> Self {
        Self { seed, stream, counter }
    }

    pub fn next_u64(&mut self) -> u64 {
        let c = self.counter;
        self.counter = self.counter.wrapping_add(1);
        mix(self.seed ^ mix(self.stream ^ mix(c.wrapping_add(0x632be59bd9b4e019))))
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn uniform_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform<T: Scalar>(&mut self) -> T {
        T::of_f64(self.uniform_f64())
    }

    /// Standard normal via Box-Muller; consumes two counter steps.
    pub fn normal_f64(&mut self) -> f64 {
        let u1 = self.uniform_f64().max(1e-300);
        let u2 = self.uniform_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal<T: Scalar>(&mut self) -> T {
        T::of_f64(self.normal_f64())
    }

    /// Standard Gumbel noise: -ln(-ln(U)).
    pub fn gumbel_f64(&mut self) -> f64 {
        let u = self.uniform_f64().clamp(1e-300, 1.0 - 1e-16);
        -(-u.ln()).ln()
    }

    pub fn fill_normal<T: Scalar>(&mut self, n: usize, std: f64) -> Vec<T> {
        (0..n).map(|_| T::of_f64(self.normal_f64() * std)).collect()
    }

    pub fn fill_uniform<T: Scalar>(&mut self, n: usize) -> Vec<T> {
        (0..n).map(|_| T::of_f64(self.uniform_f64())).collect()
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Deterministic Fisher-Yates shuffle.
    pub fn shuffle<V>(&mut self, items: &mut [V]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Draw `k` distinct indices from [0, n) (order = shuffled prefix).
    pub fn choose_k(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx.truncate(k);
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_state_same_draws() {
        let mut a = RngStream::with_stream(42, 7);
        let mut b = RngStream::with_stream(42, 7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn counter_restart_replays() {
        let mut a = RngStream::with_stream(1, 2);
        let first: Vec<u64> = (0..10).map(|_| a.next_u64()).collect();
        let (seed, stream, _) = a.state();
        let mut b = RngStream::from_state(seed, stream, 0);
        let second: Vec<u64> = (0..10).map(|_| b.next_u64()).collect();
        assert_eq!(first, second);
    }

    #[test]
    fn substreams_diverge() {
        let root = RngStream::new(3);
        let mut a = root.substream(0);
        let mut b = root.substream(1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn uniform_in_unit_interval_and_roughly_centered() {
        let mut r = RngStream::new(11);
        let n = 20_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let u = r.uniform_f64();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn normal_moments() {
        let mut r = RngStream::new(5);
        let n = 40_000;
        let xs: Vec<f64> = (0..n).map(|_| r.normal_f64()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
