//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these run on the rayon global pool;
//! without it, or with [`Execution::Sequential`], they fall back to plain
//! iterators. Output order always matches input order, so results are
//! identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// How batch work is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether work will actually be spread across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// `items.iter().map(f).collect()`, possibly in parallel.
pub fn map_slice<S, T, F>(exec: Execution, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Sum of `f(x)` over `items`. Chunked with a fixed chunk size and combined
/// left to right, so the floating-point result does not depend on the
/// thread count.
pub fn sum_by<S, F>(exec: Execution, items: &[S], f: F) -> f64
where
    S: Sync,
    F: Fn(&S) -> f64 + Sync + Send,
{
    const CHUNK: usize = 4096;
    if items.len() <= CHUNK {
        return items.iter().map(&f).sum();
    }
    let partial = |chunk: &[S]| chunk.iter().map(&f).sum::<f64>();
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        let parts: Vec<f64> = items.par_chunks(CHUNK).map(partial).collect();
        return parts.into_iter().sum();
    }
    let _ = exec;
    items.chunks(CHUNK).map(partial).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_parallel_agree() {
        let xs: Vec<f64> = (0..20_000).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = sum_by(Execution::Sequential, &xs, |x| x * x);
        let b = sum_by(Execution::Parallel, &xs, |x| x * x);
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(
            map_range(Execution::Sequential, 100, |i| i * i),
            map_range(Execution::Parallel, 100, |i| i * i)
        );
    }
}
