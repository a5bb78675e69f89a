//! Chunked data-parallel execution with schedule-independent results.
//!
//! Work over `0..n` is cut into consecutive chunks of [`CHUNK`] indices. An
//! [`Executor`] only decides *where* chunks run; chunk boundaries and the
//! order in which chunk results are combined are fixed here. Maps and sums
//! are therefore bitwise identical for any worker count.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::any::Any;
use core::ops::Range;

/// Elements per chunk. Never derived from the worker count.
pub const CHUNK: usize = 4096;

/// Result of one chunk, type-erased so executors stay object safe.
pub type ChunkOutput = Box<dyn Any + Send>;

/// Runs independent chunk jobs, possibly concurrently.
pub trait Executor: Sync {
    /// Number of workers chunks are spread over.
    fn workers(&self) -> usize;

    /// Calls `job(i)` once for every `i` in `0..chunks` and returns the outputs
    /// indexed by `i`.
    fn run_chunks(&self, chunks: usize, job: &(dyn Fn(usize) -> ChunkOutput + Sync))
        -> Vec<ChunkOutput>;
}

/// Runs every chunk on the calling thread, in order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn workers(&self) -> usize {
        1
    }

    fn run_chunks(
        &self,
        chunks: usize,
        job: &(dyn Fn(usize) -> ChunkOutput + Sync),
    ) -> Vec<ChunkOutput> {
        (0..chunks).map(job).collect()
    }
}

/// Index range covered by chunk `i` of `n` elements.
pub fn chunk_range(i: usize, n: usize) -> Range<usize> {
    let start = i * CHUNK;
    start..(start + CHUNK).min(n)
}

pub fn chunk_count(n: usize) -> usize {
    n.div_ceil(CHUNK)
}

fn unbox<T: 'static>(out: ChunkOutput) -> T {
    *out.downcast::<T>()
        .unwrap_or_else(|_| panic!("executor returned a foreign chunk output"))
}

/// `out[i] = f(i)` for `i` in `0..n`.
pub fn parallel_map<T, F>(exec: &dyn Executor, n: usize, f: F) -> Vec<T>
where
    T: Send + 'static,
    F: Fn(usize) -> T + Sync,
{
    parallel_map_grain(exec, n, CHUNK, f)
}

/// [`parallel_map`] with `grain` indices per job instead of [`CHUNK`], for
/// items that are individually expensive (a whole scan line, say). Map
/// results do not depend on the grain.
pub fn parallel_map_grain<T, F>(exec: &dyn Executor, n: usize, grain: usize, f: F) -> Vec<T>
where
    T: Send + 'static,
    F: Fn(usize) -> T + Sync,
{
    let grain = grain.max(1);
    let outputs = exec.run_chunks(n.div_ceil(grain), &|c| {
        let start = c * grain;
        Box::new((start..(start + grain).min(n)).map(&f).collect::<Vec<T>>()) as ChunkOutput
    });
    let mut out = Vec::with_capacity(n);
    for chunk in outputs {
        out.extend(unbox::<Vec<T>>(chunk));
    }
    out
}

/// Fallible [`parallel_map`]. On failure the error of the lowest failing index
/// is returned, whatever order chunks finished in.
pub fn try_parallel_map<T, E, F>(exec: &dyn Executor, n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send + 'static,
    E: Send + 'static,
    F: Fn(usize) -> Result<T, E> + Sync,
{
    let outputs = exec.run_chunks(chunk_count(n), &|c| {
        // a chunk stops at its own first failure; lower chunks are checked first below
        Box::new(chunk_range(c, n).map(&f).collect::<Result<Vec<T>, E>>()) as ChunkOutput
    });
    let mut out = Vec::with_capacity(n);
    for chunk in outputs {
        out.extend(unbox::<Result<Vec<T>, E>>(chunk)?);
    }
    Ok(out)
}

/// Sum of `f(i)` over `0..n` with a fixed summation tree: each chunk is summed
/// left to right, then chunk partials are added left to right.
pub fn reduce_sum<F>(exec: &dyn Executor, n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    reduce_sums::<1, _>(exec, n, |i| [f(i)])[0]
}

/// [`reduce_sum`] over `K` sums at once, sharing one pass over the indices.
pub fn reduce_sums<const K: usize, F>(exec: &dyn Executor, n: usize, f: F) -> [f64; K]
where
    F: Fn(usize) -> [f64; K] + Sync,
{
    let partials = exec.run_chunks(chunk_count(n), &|c| {
        let mut acc = [0.0f64; K];
        for i in chunk_range(c, n) {
            let v = f(i);
            for k in 0..K {
                acc[k] += v[k];
            }
        }
        Box::new(acc) as ChunkOutput
    });
    let mut total = [0.0f64; K];
    for p in partials {
        let p = unbox::<[f64; K]>(p);
        for k in 0..K {
            total[k] += p[k];
        }
    }
    total
}
