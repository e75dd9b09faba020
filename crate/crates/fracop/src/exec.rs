//! Thread-pool executor for sharded batch gradients.

use fracop_core::train::{Executor, ShardOutput};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Runs shards on a dedicated rayon pool. Results are collected in shard
/// order, so a fixed worker count gives bit-identical training.
pub struct Pool {
    pool: rayon::ThreadPool,
    workers: usize,
}

impl Pool {
    pub fn new(threads: usize) -> Result<Self> {
        let workers = threads.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Usage(format!("cannot start {workers} threads: {e}")))?;
        Ok(Self { pool, workers })
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

impl Executor for Pool {
    fn map(&self, count: usize, f: &(dyn Fn(usize) -> ShardOutput + Sync)) -> Vec<ShardOutput> {
        if self.workers == 1 {
            return (0..count).map(f).collect();
        }
        self.pool.install(|| (0..count).into_par_iter().map(f).collect())
    }

    fn workers(&self) -> usize {
        self.workers
    }
}
