//! Counter-based deterministic RNG.
//!
//! Every stochastic decision in the system (weight init, dropout masks,
//! corpus synthesis, shuffling) draws from this generator. It is a
//! splitmix64-style counter design: the state is `(seed, counter)` and each
//! draw hashes the pair, so `fork` can hand out independent streams that
//! stay reproducible no matter how many values the parent has consumed —
//! which is what makes per-document parallelism deterministic.

/// Deterministic pseudo-random source with cheap independent substreams.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    counter: u64,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 output function: a strong bit mixer over a 64-bit input.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { seed, counter: 0 }
    }

    /// Next raw 64-bit value.
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.seed ^ mix(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Independent substream identified by `stream`.
    ///
    /// Forking with the same stream id always yields the same child
    /// regardless of how many draws the parent has made, so work items can
    /// be processed in any order (or in parallel) without perturbing each
    /// other's randomness.
    pub fn fork(&self, stream: u64) -> Rng {
        Rng { seed: mix(self.seed ^ mix(stream.wrapping_mul(GOLDEN) ^ 0x517c_c1b7_2722_0a95)), counter: 0 }
    }

    /// Uniform float in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        // 53 high bits -> uniform double in [0,1).
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform float in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, bound)`. Panics if `bound == 0`.
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "below(0)");
        // Multiply-shift bounded sampling; bias is < 2^-64 per draw, far
        // below anything observable at the corpus sizes used here.
        ((self.next_u64() as u128 * bound as u128) >> 64) as usize
    }

    /// Uniform integer in `[lo, hi]` inclusive.
    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        assert!(lo <= hi, "range lo > hi");
        lo + self.below(hi - lo + 1)
    }

    /// Bernoulli draw with probability `p`.
    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Pick one element of a non-empty slice.
    pub fn choose<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len())]
    }
}
