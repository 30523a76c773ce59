//! Counter-based deterministic PRNG.
//!
//! Every draw is `mix(seed, counter)` with a splitmix64-style finalizer, so a
//! stream is fully determined by `(seed, counter)` and can be split or
//! replayed without carrying mutable state across threads.

/// Reproducible uniform stream keyed by `(seed, counter)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    pub counter: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { seed, counter: 0 }
    }

    /// Derive an independent stream, e.g. per (subject, trial).
    pub fn derive(&self, tag: u64) -> RngState {
        RngState {
            seed: mix64(self.seed, tag ^ 0x9e37_79b9_7f4a_7c15),
            counter: 0,
        }
    }

    /// Next u64 of the stream; advances the counter by one.
    pub fn next_u64(&mut self) -> u64 {
        let v = mix64(self.seed, self.counter);
        self.counter += 1;
        v
    }

    /// Uniform draw in [0, 1) with 53 bits of mantissa.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [lo, hi).
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). Rejection-free modulo is fine here: n is
    /// always tiny relative to 2^64 so the bias is far below test tolerances,
    /// but use Lemire-style multiply-shift for cleanliness.
    pub fn range_u64(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Fill with uniform draws in [0, 1).
    pub fn uniform(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next_f64()).collect()
    }

    /// Standard normal via Box-Muller on two counter draws.
    pub fn next_normal(&mut self) -> f64 {
        // Guard u1 away from zero so ln() stays finite.
        let u1 = (self.next_f64()).max(f64::MIN_POSITIVE);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Seeded Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.range_u64(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

fn mix64(seed: u64, counter: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0xff51_afd7_ed55_8ccd)
        .wrapping_add(counter.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(0x2545_f491_4f6c_dd1d);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
