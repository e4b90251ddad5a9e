use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// ChaCha stream reserved for batch sampling; parameter init uses stream 0.
pub const BATCH_STREAM: u64 = 1;

pub fn batch_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(BATCH_STREAM);
    rng
}

/// Point indices of one batch: uniform with replacement, or every point once in order.
pub fn sample_batch(n_points: usize, batch: usize, exhaustive: bool, rng: &mut ChaCha8Rng) -> Result<Vec<u32>> {
    if n_points == 0 {
        return Err(Error::EmptyGrid);
    }
    if n_points > u32::MAX as usize {
        return Err(Error::InvalidConfig(format!("{n_points} points exceed the u32 index range")));
    }
    if exhaustive {
        return Ok((0..n_points as u32).collect());
    }
    Ok((0..batch).map(|_| rng.gen_range(0..n_points as u32)).collect())
}
