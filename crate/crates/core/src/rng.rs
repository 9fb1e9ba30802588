//! Counter-based random streams.
//!
//! A [`SeedTree`] turns one master seed into independent ChaCha streams keyed
//! by `(domain, major, minor)`. The key picks the ChaCha key and stream id
//! directly, so stream `(d, j, i)` never depends on how many other streams
//! were requested or in which order; adding realizations leaves existing
//! ones untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator behind every stream.
pub type StreamRng = ChaCha8Rng;

/// Stream domains used inside the crate. Callers may use any other `u64`.
pub mod domain {
    pub const PARAMETERS: u64 = 0x5041_5241;
    pub const REALIZATION: u64 = 0x5245_414c;
    pub const REFERENCE: u64 = 0x5245_4652;
    pub const TABLE: u64 = 0x5441_424c;
    pub const ETA: u64 = 0x4554_4121;
    pub const SYNTHETIC: u64 = 0x5359_4e54;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// A child tree whose streams are disjoint from this one's, e.g. one per
    /// experiment label.
    pub fn child(&self, label: &str) -> SeedTree {
        SeedTree {
            master: splitmix(self.master ^ fnv1a(label.as_bytes())),
        }
    }

    pub fn stream(&self, domain: u64, major: u32, minor: u32) -> StreamRng {
        let mut state = self.master ^ domain.rotate_left(17);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = StreamRng::from_seed(key);
        rng.set_stream(((major as u64) << 32) | minor as u64);
        rng
    }
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
