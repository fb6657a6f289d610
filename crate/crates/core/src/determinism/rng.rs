//! Minimal-standard linear congruential generator (minstd_rand0) plus the
//! shuffle built on it. Chosen over heavier generators because its integer
//! recurrence is exactly reproducible everywhere, which quorum validation of
//! worker results depends on.

use thiserror::Error;

const MULTIPLIER: u64 = 16_807;
const MODULUS: u64 = 2_147_483_647;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("rng state {0} outside [1, 2147483646]")]
pub struct RngStateError(pub u64);

/// Lehmer generator: `state <- 16807 * state mod (2^31 - 1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortableRng {
    state: u64,
}

impl PortableRng {
    /// Seeds the generator. Any seed is accepted; it is reduced into the
    /// valid state range [1, 2147483646], with 0 mapping to 1.
    pub fn new(seed: u64) -> Self {
        let s = seed % MODULUS;
        Self {
            state: if s == 0 { 1 } else { s },
        }
    }

    /// Restores a generator from a checkpointed state.
    pub fn from_state(state: u64) -> Result<Self, RngStateError> {
        if state == 0 || state >= MODULUS {
            return Err(RngStateError(state));
        }
        Ok(Self { state })
    }

    /// Current state, for checkpoints. Equal to the last value returned by
    /// [`PortableRng::next`].
    pub fn state(&self) -> u64 {
        self.state
    }

    /// Advances the recurrence and returns the new state, in [1, 2147483646].
    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> u64 {
        self.state = (MULTIPLIER * self.state) % MODULUS;
        self.state
    }

    /// Uniform draw in [0, 1): `(next() - 1) / 2147483646`.
    pub fn uniform_real(&mut self) -> f64 {
        (self.next() - 1) as f64 / 2_147_483_646.0
    }

    /// Uniform integer in [0, n) as `next() mod n`. The modulo bias at this
    /// modulus is below 1e-9 for every n used by the search operators.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0, "below(0)");
        self.next() % n
    }

    /// Approximate standard normal draw: sum of 12 uniform draws minus 6.
    /// Mean 0 and variance exactly 1, with no transcendental calls, at the
    /// cost of truncated tails beyond six sigma.
    pub fn normal(&mut self) -> f64 {
        let mut sum = 0.0;
        for _ in 0..12 {
            sum += self.uniform_real();
        }
        sum - 6.0
    }
}

/// In-place Fisher-Yates shuffle: for i from n-1 down to 1, swap element i
/// with element `below(i + 1)`.
pub fn fisher_yates_shuffle<T>(items: &mut [T], rng: &mut PortableRng) {
    for i in (1..items.len()).rev() {
        let j = rng.below((i + 1) as u64) as usize;
        items.swap(i, j);
    }
}
