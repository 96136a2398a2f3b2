//! Execution strategy for data-parallel stages.
//!
//! Per-series work (fitting, forecasting, metric computation) is
//! embarrassingly parallel; results are collected in input order and
//! aggregated sequentially, so sequential and parallel execution produce
//! identical output. The `parallel` feature (on by default) enables the
//! rayon path; without it only `Sequential` exists.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Executor {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Executor {
    #[cfg(feature = "parallel")]
    fn default() -> Self {
        Executor::Parallel
    }

    #[cfg(not(feature = "parallel"))]
    fn default() -> Self {
        Executor::Sequential
    }
}

impl Executor {
    /// Map over owned items, preserving order.
    pub fn map_vec<T, U, F>(&self, items: Vec<T>, f: F) -> Vec<U>
    where
        T: Send,
        U: Send,
        F: Fn(T) -> U + Sync + Send,
    {
        match self {
            Executor::Sequential => items.into_iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Executor::Parallel => items.into_par_iter().map(f).collect(),
        }
    }

    /// Pull items from a fallible stream in chunks of `chunk_size`, map each
    /// chunk (parallel when enabled), and feed results to `sink` in input
    /// order. Memory stays bounded by one chunk regardless of stream length.
    pub fn for_each_chunked<T, U, M, S>(
        &self,
        mut stream: impl Iterator<Item = Result<T>>,
        chunk_size: usize,
        map: M,
        mut sink: S,
    ) -> Result<()>
    where
        T: Send,
        U: Send,
        M: Fn(T) -> Result<U> + Sync + Send,
        S: FnMut(U) -> Result<()>,
    {
        let chunk_size = chunk_size.max(1);
        loop {
            let mut chunk = Vec::with_capacity(chunk_size);
            for item in stream.by_ref().take(chunk_size) {
                chunk.push(item?);
            }
            if chunk.is_empty() {
                return Ok(());
            }
            for result in self.map_vec(chunk, &map) {
                sink(result?)?;
            }
        }
    }
}
