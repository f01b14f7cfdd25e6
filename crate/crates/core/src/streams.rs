//! Deterministic random streams.
//!
//! Every random quantity is drawn from its own ChaCha20 stream whose key is
//! built from `(master seed, index, purpose)`, so trials can be generated in
//! any order, on any thread, with bit-identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// What a stream is used for. Distinct purposes never share a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Signal,
    Sensing,
    Spectrum,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Signal => 0x5349_474e_414c,
            Purpose::Sensing => 0x0053_454e_5349_4e47,
            Purpose::Spectrum => 0x5350_4543_5452_554d,
        }
    }
}

pub fn stream(master: u64, index: u64, purpose: Purpose) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    key[16..24].copy_from_slice(&purpose.tag().to_le_bytes());
    key[24..].copy_from_slice(b"l1-phase");
    ChaCha20Rng::from_seed(key)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` at size `n` in a campaign keyed by `master`.
pub fn trial_seed(master: u64, n: usize, trial: usize) -> u64 {
    splitmix(splitmix(splitmix(master) ^ n as u64) ^ trial as u64)
}
