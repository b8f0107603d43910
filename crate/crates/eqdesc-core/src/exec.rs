//! Data-parallel helpers. Batch generation, training, decoding and scoring
//! all fan out per item through [`map_indexed`]; results are reduced in index
//! order afterwards, so outputs are bit-identical whatever the thread count.
//!
//! With the `parallel` feature disabled the same entry points run
//! sequentially; [`map_indexed_seq`] is always sequential and exists so the
//! benches can compare both paths in one binary.

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Sequential reference path for the benches.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Cap the worker pool. `None` leaves the default (one worker per core).
/// Called once at process start; later calls are ignored by rayon.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: Option<usize>) {
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: Option<usize>) {}
