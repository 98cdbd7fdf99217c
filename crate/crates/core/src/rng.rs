//! Seeded random substreams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream derived from
//! `(base_seed, trial_index, lane)`:
//!
//! * the key is `ChaCha8Rng::seed_from_u64(base_seed)`;
//! * the 64-bit stream id is `(trial_index << 16) | lane`.
//!
//! Lane 0 of a trial draws the ground-truth segment, lane `i + 1` belongs to
//! source `i`. Streams never overlap, so trials can be evaluated in any order
//! (or concurrently) and still produce the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Lane of the per-trial ground-truth draw.
pub const TRUTH_LANE: u64 = 0;

/// Largest usable trial index; higher ids are reserved for setup streams.
pub const MAX_TRIAL: u64 = (1 << 47) - 1;

/// Reserved trial id for experiment setup (series generation and the like).
pub const SETUP_TRIAL: u64 = 1 << 47;

/// Maximum number of lanes per trial.
pub const MAX_LANES: u64 = 1 << 16;

pub fn substream(base_seed: u64, trial_index: u64, lane: u64) -> StreamRng {
    assert!(lane < MAX_LANES, "lane {lane} out of range");
    assert!(trial_index < (1 << 48), "trial index {trial_index} out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream((trial_index << 16) | lane);
    rng
}

/// Lane for source `index`.
pub fn source_lane(index: usize) -> u64 {
    index as u64 + 1
}
