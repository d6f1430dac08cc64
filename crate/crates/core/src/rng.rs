//! Per-task random streams.
//!
//! Every task draws from its own ChaCha20 stream: the key is derived from the
//! master seed and the 64-bit stream id is the task index. Streams are
//! independent of scheduling, so results do not depend on thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Identifier recorded in output metadata.
pub const RNG_ALGORITHM: &str = "chacha20(seed_from_u64(master), stream=task_index)";

/// Generator for task `task` under `master_seed`.
pub fn task_rng(master_seed: u64, task: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(task);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = task_rng(1, 5).random();
        let b: u64 = task_rng(1, 5).random();
        let c: u64 = task_rng(1, 6).random();
        let d: u64 = task_rng(2, 5).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
