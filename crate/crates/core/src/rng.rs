//! Portable seeded shuffling.
//!
//! Lexicon splits and permutation tests must reproduce bit-for-bit across
//! platforms, crate upgrades and reimplementations in other languages, so the
//! generator and the reduction to a bounded integer are fixed here rather than
//! delegated to a library whose sampling algorithms may change between
//! releases.
//!
//! * Generator: SplitMix64 (Steele, Lea & Flood 2014). The state advances by
//!   the golden-ratio increment `0x9E3779B97F4A7C15`; each output is the state
//!   passed through the `mix64` finalizer (shifts 30/27/31, multipliers
//!   `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`).
//! * Bounded integers: Lemire's multiply-shift with rejection. For a bound
//!   `n`, draw `x`, form the 128-bit product `x * n`; reject while the low 64
//!   bits are below `(2^64 - n) mod n`, otherwise return the high 64 bits.
//! * Shuffle: Fisher-Yates from the last index down, `j = below(i + 1)`.

#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform integer in `0..bound`. `bound` must be nonzero.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let m = u128::from(self.next_u64()) * u128::from(bound);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
