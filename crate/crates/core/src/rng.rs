//! Deterministic random-number streams.
//!
//! All randomness in a run is derived from a single master seed, fanned out
//! into independent ChaCha8 streams. A stream id selects a component
//! (dataset generation, weight init, ...); per-image streams add the image's
//! manifest index to a widely spaced base so they never collide with the
//! component ids.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Training split of the synthetic dataset.
pub const STREAM_DATA_TRAIN: u64 = 1;
/// Held-out split of the synthetic dataset.
pub const STREAM_DATA_TEST: u64 = 2;
/// Predictor weight initialization.
pub const STREAM_WEIGHT_INIT: u64 = 3;
/// Minibatch shuffling during training.
pub const STREAM_SHUFFLE: u64 = 4;
/// Base for per-image random fixation initialization: `SCANPATH_BASE + index`.
pub const STREAM_SCANPATH_BASE: u64 = 5 << 32;
/// Base for per-image RandomCAM seeds: `RANDOM_CAM_BASE + index`.
pub const STREAM_RANDOM_CAM_BASE: u64 = 6 << 32;

/// ChaCha8 generator for `(seed, stream)`.
///
/// Identical `(seed, stream)` pairs always yield identical sequences,
/// independent of platform.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Collapses `(seed, stream)` into a single derived seed, for interfaces that
/// accept one bare seed (e.g. RandomCAM).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    stream_rng(seed, stream).next_u64()
}
