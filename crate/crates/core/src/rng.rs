//! Counter-based random streams.
//!
//! A single 64-bit master seed is expanded into a ChaCha key. Every
//! independent unit of work (one experiment cycle, one tomography setting,
//! one bootstrap replica) draws from its own ChaCha stream selected by a
//! 64-bit counter, so results do not depend on the order or the thread in
//! which units are evaluated.
//!
//! Derivation:
//! - key = four successive SplitMix64 outputs of the (domain-mixed) seed,
//!   little-endian;
//! - stream id = the unit counter (e.g. the global cycle index);
//! - word position starts at zero.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG type handed to samplers.
pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamFactory {
    seed: u64,
    key: [u8; 32],
}

impl StreamFactory {
    pub fn new(master_seed: u64) -> Self {
        let mut state = master_seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self {
            seed: master_seed,
            key,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child factory for a separate purpose (tomography, bootstrap, ...).
    pub fn domain(&self, tag: u64) -> Self {
        let mut state = self.seed ^ tag.wrapping_mul(GOLDEN).rotate_left(17);
        Self::new(splitmix64(&mut state))
    }

    /// Independent stream number `index`.
    pub fn stream(&self, index: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index);
        rng
    }
}
