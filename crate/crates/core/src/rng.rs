//! Named, reproducible random substreams.
//!
//! Every random quantity in a run is derived from one user seed. Modules ask
//! for a stream by name and index (`"sampler"`, chain 2), so rerunning one
//! stage reproduces exactly the numbers it produced inside a full pipeline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fingerprint::fnv1a;

pub type StreamRng = ChaCha8Rng;

pub const SAMPLER: &str = "sampler";
pub const SYNTH: &str = "synth";
pub const BOOTSTRAP: &str = "bootstrap";
pub const MC: &str = "mc";
pub const GENERATOR: &str = "generator";

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of substream `(name, index)` under `root`.
pub fn substream_seed(root: u64, name: &str, index: u64) -> u64 {
    let tag = fnv1a(name.as_bytes());
    splitmix64(splitmix64(root ^ tag).wrapping_add(index))
}

pub fn substream(root: u64, name: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(substream_seed(root, name, index))
}
