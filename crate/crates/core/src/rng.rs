use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent RNG stream for one purpose of one pipeline cell.
///
/// Streams are keyed by `(tag, round, fold)` so results never depend on the
/// order in which cells are evaluated.
pub(crate) fn stream(master_seed: u64, tag: u16, round: u32, fold: u16) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    let id = (u64::from(tag) << 48) | (u64::from(round) << 16) | u64::from(fold);
    rng.set_stream(id);
    rng
}

pub(crate) const TAG_FOLDS: u16 = 1;
pub(crate) const TAG_DRAWS: u16 = 2;
pub(crate) const TAG_SYNTH: u16 = 3;
