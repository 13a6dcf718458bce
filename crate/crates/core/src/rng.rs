//! Seeded randomness. All experiments draw from ChaCha8, a counter-based stream
//! cipher generator, so a seed pins every random signal and symbol.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ExperimentRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> ExperimentRng {
    ChaCha8Rng::seed_from_u64(seed)
}
