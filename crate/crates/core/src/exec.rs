//! Batch execution strategy.
//!
//! Every data-parallel loop in the crate (per-sample forward/backward passes,
//! per-image evaluation) goes through [`Execution`]. Results always come back
//! in input order, so reductions over them are deterministic regardless of the
//! number of worker threads.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    /// Rayon worker pool when the `parallel` feature is enabled, sequential otherwise.
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// Whether work is actually spread across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Number of items worth processing together before reducing.
    pub fn chunk_len(self) -> usize {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return rayon::current_num_threads().max(1);
        }
        1
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Maps `f` over `0..n` in chunks of [`Self::chunk_len`] and folds each
    /// result into `acc` in index order.
    pub fn map_fold<R, A, F, G>(self, n: usize, acc: &mut A, f: F, mut fold: G)
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
        G: FnMut(&mut A, R),
    {
        let chunk = self.chunk_len();
        let mut start = 0;
        while start < n {
            let end = (start + chunk).min(n);
            let results = self.map_range(end - start, |i| f(start + i));
            for r in results {
                fold(acc, r);
            }
            start = end;
        }
    }
}
