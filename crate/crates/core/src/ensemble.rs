//! Ordered maps over trajectory indices.
//!
//! With the `parallel` feature the work is spread over the rayon pool, but
//! results always come back in index order so that reductions performed by
//! the caller are independent of scheduling.

use alloc::vec::Vec;

/// Trajectories per reduction chunk. Chunk boundaries are fixed so sums come
/// out bit-identical for any worker count.
pub(crate) const CHUNK: usize = 32;

#[cfg(feature = "parallel")]
pub(crate) fn map_ordered<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_ordered<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// `(start, end)` trajectory ranges of the fixed reduction chunks.
pub(crate) fn chunks(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(CHUNK)).map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(n))).collect()
}
