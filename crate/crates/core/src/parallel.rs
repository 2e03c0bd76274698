//! Deterministic data-parallel helpers.
//!
//! Ensemble work is cut into fixed-size chunks whose boundaries depend only on
//! the problem size, never on the worker count. Each chunk owns an RNG stream
//! derived from `(seed, chunk index)`, and chunk results are reduced in index
//! order. A run is therefore bit-identical across worker counts and between
//! the rayon path and the sequential fallback.
//!
//! With the `parallel` feature disabled every helper runs sequentially. With
//! it enabled, [`sequential`] forces the fallback for the duration of a
//! closure, which is how the benchmarks compare both paths in one binary.

use std::cell::Cell;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with the sequential fallback forced on the current thread.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    let previous = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let out = f();
    FORCE_SEQUENTIAL.with(|c| c.set(previous));
    out
}

/// Whether calls made from this thread will fan out over rayon.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(|c| c.get())
}

/// Number of worker threads that parallel sections will use.
pub fn worker_count() -> usize {
    #[cfg(feature = "parallel")]
    {
        if is_parallel() {
            return rayon::current_num_threads();
        }
    }
    1
}

/// Runs `f` inside a pool of `workers` threads (or sequentially for one worker).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if workers > 1 {
            match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                Ok(pool) => return pool.install(f),
                Err(e) => log::warn!("could not build a {workers}-thread pool ({e}); running inline"),
            }
        } else {
            return sequential(f);
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = workers;
    f()
}

/// Splits `0..len` into chunks of `chunk` items.
pub fn chunk_ranges(len: usize, chunk: usize) -> Vec<std::ops::Range<usize>> {
    let chunk = chunk.max(1);
    (0..len.div_ceil(chunk))
        .map(|c| c * chunk..((c + 1) * chunk).min(len))
        .collect()
}

/// Maps `f` over the chunks of `0..len`, returning results in chunk order.
pub fn map_chunks<R, F>(len: usize, chunk: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize, std::ops::Range<usize>) -> R + Sync + Send,
{
    let ranges = chunk_ranges(len, chunk);
    #[cfg(feature = "parallel")]
    {
        if is_parallel() && ranges.len() > 1 {
            use rayon::prelude::*;
            return ranges
                .into_par_iter()
                .enumerate()
                .map(|(i, r)| f(i, r))
                .collect();
        }
    }
    ranges.into_iter().enumerate().map(|(i, r)| f(i, r)).collect()
}

/// Maps `f` over `0..len` item by item, preserving order.
pub fn map_indices<R, F>(len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() && len > 1 {
            use rayon::prelude::*;
            return (0..len).into_par_iter().map(f).collect();
        }
    }
    (0..len).map(f).collect()
}

/// Applies `f` to every element of `data`.
pub fn for_each_mut<T, F>(data: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() && data.len() >= PARALLEL_ELEMENTWISE_MIN {
            use rayon::prelude::*;
            data.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
            return;
        }
    }
    data.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
}

/// Runs two closures, concurrently when parallelism is on.
pub fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() {
            return rayon::join(a, b);
        }
    }
    (a(), b())
}

/// Below this length elementwise loops are not worth splitting.
#[cfg(feature = "parallel")]
const PARALLEL_ELEMENTWISE_MIN: usize = 1 << 14;

/// Default number of ensemble members per chunk.
pub const DEFAULT_CHUNK: usize = 1024;

/// Independent RNG for chunk `index` of a run seeded with `seed`.
pub fn chunk_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}
