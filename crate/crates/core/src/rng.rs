//! Hierarchical deterministic random streams.
//!
//! A [`RandomStream`] is a root seed plus a path of stream ids
//! (experiment -> drop -> realization ...). Every path maps to its own
//! ChaCha key, so sibling streams are independent and the same
//! `(seed, path)` always reproduces the same sequence regardless of the
//! order in which streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RandomStream {
    seed: u64,
    path: Vec<u64>,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            path: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Substream `id` below this one.
    pub fn child(&self, id: u64) -> Self {
        let mut path = self.path.clone();
        path.push(id);
        Self {
            seed: self.seed,
            path,
        }
    }

    /// Named substream; the label is hashed into a stream id.
    pub fn named(&self, label: &str) -> Self {
        let id = label
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
                (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
            });
        self.child(id)
    }

    /// A generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut state = mix(self.seed);
        for (depth, id) in self.path.iter().enumerate() {
            state = mix(state ^ mix(id.wrapping_add(depth as u64 + 1)));
        }
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_mut(8).enumerate() {
            state = mix(state.wrapping_add(i as u64));
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}
