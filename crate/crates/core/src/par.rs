//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) work items run on the rayon pool;
//! without it the same closures run in a plain loop. Outputs are always
//! returned in index order, so reductions over them are order-fixed and the
//! numbers do not depend on the worker count.

/// Number of Gaussian samples drawn per shard. Shard `i` reads stream `i`.
pub const SHARD_SIZE: usize = 2048;

/// Splits `samples` into consecutive shard lengths of at most [`SHARD_SIZE`].
pub fn shard_lengths(samples: usize) -> Vec<usize> {
    let full = samples / SHARD_SIZE;
    let mut out = vec![SHARD_SIZE; full];
    if !samples.is_multiple_of(SHARD_SIZE) {
        out.push(samples % SHARD_SIZE);
    }
    out
}

/// Evaluates `f(0..count)` and returns the results in index order.
#[cfg(feature = "parallel")]
pub fn map_indices<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indices<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indices_seq(count, f)
}

/// Sequential counterpart of [`map_indices`], always available.
pub fn map_indices_seq<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}

/// Applies `f(offset, chunk)` to consecutive mutable chunks of `data` and
/// returns the per-chunk results in chunk order.
#[cfg(feature = "parallel")]
pub fn map_chunks_mut<T, R, F>(data: &mut [T], chunk: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, &mut [T]) -> R + Sync + Send,
{
    use rayon::prelude::*;
    data.par_chunks_mut(chunk.max(1))
        .enumerate()
        .map(|(i, c)| f(i * chunk.max(1), c))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_chunks_mut<T, R, F>(data: &mut [T], chunk: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, &mut [T]) -> R + Sync + Send,
{
    data.chunks_mut(chunk.max(1))
        .enumerate()
        .map(|(i, c)| f(i * chunk.max(1), c))
        .collect()
}

/// Whether the crate was built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
