//! Execution policy for the data-parallel inner loops.
//!
//! Every hot loop in the crate (ray casting, per-point maps, batches of groups,
//! Monte-Carlo sweeps) goes through [`Execution`]. Results are always collected
//! in input order, so the two policies produce identical bytes. Without the
//! `parallel` feature, `Execution::Parallel` silently runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum number of items handed to a single rayon task.
#[cfg(feature = "parallel")]
const MIN_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run in parallel.
    pub const fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    pub fn map_slice<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.par_iter().with_min_len(MIN_CHUNK).map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    pub fn map_range<U, F>(self, len: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..len)
                .into_par_iter()
                .with_min_len(MIN_CHUNK)
                .map(f)
                .collect(),
            _ => (0..len).map(f).collect(),
        }
    }

    /// Like [`Execution::map_range`] but with one task per item, for coarse work
    /// such as whole groups or Monte-Carlo chunks.
    pub fn map_tasks<U, F>(self, len: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..len).into_par_iter().map(f).collect(),
            _ => (0..len).map(f).collect(),
        }
    }
}
