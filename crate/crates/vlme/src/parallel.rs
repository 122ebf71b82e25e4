//! Multi-threaded grid search.
//!
//! The flat index range is cut into fixed-size chunks that do not depend on
//! the thread count. Per-chunk bests are combined with [`RangeBest::merge`],
//! which is associative and commutative, so the result is identical for any
//! number of threads and any scheduling order.

use rayon::prelude::*;
use vlme_core::training_free::{RangeBest, SearchExecutor, SearchProblem};

pub const DEFAULT_CHUNK: u64 = 256;

#[derive(Debug, Clone, Copy)]
pub struct RayonExecutor {
    pub chunk: u64,
}

impl Default for RayonExecutor {
    fn default() -> Self {
        Self { chunk: DEFAULT_CHUNK }
    }
}

impl SearchExecutor for RayonExecutor {
    fn run(&self, problem: &SearchProblem<'_>, points: u64) -> RangeBest {
        let chunk = self.chunk.max(1);
        let chunks = points.div_ceil(chunk);
        (0..chunks)
            .into_par_iter()
            .map(|c| problem.evaluate_range(c * chunk, ((c + 1) * chunk).min(points)))
            .reduce_with(RangeBest::merge)
            .unwrap_or_else(|| problem.evaluate_range(0, 0))
    }
}

/// Runs `f` on a pool with exactly `threads` workers (at least one).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
