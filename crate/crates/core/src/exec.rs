//! Frame-parallel execution.
//!
//! Only frame-wise independent maps run in parallel. Scatter-adds into
//! image- or frame-sized buffers are always serial in frame order, so results
//! are bitwise identical for any worker count.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{PtychoError, Result};

/// Environment variable capping the worker count (0 = serial).
pub const THREADS_ENV: &str = "PTYCHO_THREADS";

#[derive(Clone, Default)]
pub struct Executor {
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor").field("threads", &self.threads()).finish()
    }
}

impl Executor {
    pub fn serial() -> Self {
        Self { pool: None }
    }

    /// `threads == 0` gives the serial executor.
    pub fn with_threads(threads: usize) -> Result<Self> {
        if threads == 0 {
            return Ok(Self::serial());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| PtychoError::Config(format!("cannot build thread pool: {e}")))?;
        Ok(Self {
            pool: Some(Arc::new(pool)),
        })
    }

    /// Reads `PTYCHO_THREADS`; unset means serial.
    pub fn from_env() -> Result<Self> {
        match std::env::var(THREADS_ENV) {
            Ok(v) => {
                let n: usize = v.trim().parse().map_err(|_| {
                    PtychoError::Config(format!("{THREADS_ENV} must be a non-negative integer, got '{v}'"))
                })?;
                Self::with_threads(n)
            }
            Err(_) => Ok(Self::serial()),
        }
    }

    pub fn threads(&self) -> usize {
        self.pool.as_ref().map_or(0, |p| p.current_num_threads())
    }

    /// Runs `f(index, chunk, scratch)` over consecutive `chunk_len` slices.
    pub fn for_each_chunk<T, S, I, F>(&self, data: &mut [T], chunk_len: usize, init: I, f: F)
    where
        T: Send,
        I: Fn() -> S + Sync + Send,
        F: Fn(usize, &mut [T], &mut S) + Sync + Send,
    {
        match &self.pool {
            None => {
                let mut scratch = init();
                for (j, chunk) in data.chunks_mut(chunk_len).enumerate() {
                    f(j, chunk, &mut scratch);
                }
            }
            Some(pool) => pool.install(|| {
                data.par_chunks_mut(chunk_len)
                    .enumerate()
                    .for_each_init(&init, |scratch, (j, chunk)| f(j, chunk, scratch));
            }),
        }
    }
}
