//! Data-parallel map over an index range.
//!
//! Work items are keyed by their index and results are collected in index
//! order, so downstream reductions are independent of the thread count.
//! With the `parallel` feature disabled the map runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Apply `f` to every index in `0..len`, returning results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..len).into_par_iter().map(f).collect()
}

/// Apply `f` to every index in `0..len`, returning results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..len).map(f).collect()
}
