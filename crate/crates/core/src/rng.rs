//! Per-atom random streams.
//!
//! Each (seed, purpose, atom index) triple maps to its own ChaCha8 stream:
//! the key is derived from the seed and purpose, and the atom index selects
//! the 64-bit stream id. Draws for one atom never depend on how atoms are
//! split across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes give independent streams
/// under the same seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    InitialState,
    MirrorKick,
    ImageNoise,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::InitialState => 0x696e_6974,
            Purpose::MirrorKick => 0x6b69_636b,
            Purpose::ImageNoise => 0x6e6f_6973,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Factory for per-atom streams.
#[derive(Debug, Clone, Copy)]
pub struct StreamFactory {
    key: [u8; 32],
}

impl StreamFactory {
    pub fn new(seed: u64, purpose: Purpose) -> Self {
        let mut state = seed ^ purpose.tag().rotate_left(32);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self { key }
    }

    /// Independent stream for item `index`.
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index);
        rng
    }
}
