//! Seed derivation.
//!
//! Every random stream in a run is derived from the master seed plus a
//! stream tag and indices, so streams are independent of execution order
//! and of which algorithm consumes them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream identifiers. Values are part of the reproducibility contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    ModelInit = 1,
    LocalTrain = 2,
    KMeans = 3,
    Partition = 4,
    Unlabeled = 5,
    Synthetic = 6,
    Split = 7,
}

pub fn derive_seed(master: u64, stream: Stream, indices: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ splitmix64(stream as u64));
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    h
}

pub fn rng_for(master: u64, stream: Stream, indices: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, stream, indices))
}
