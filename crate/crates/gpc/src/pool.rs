//! Thread-backed [`Executor`].

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use gpc_core::parexec::{ChunkOutput, Executor};

/// Spreads chunks over `workers` scoped threads per call. Threads pull chunk
/// indices from a shared counter; outputs are slotted back by index, so the
/// caller sees the same order as [`gpc_core::Sequential`].
#[derive(Debug, Clone, Copy)]
pub struct ThreadPool {
    workers: usize,
}

impl ThreadPool {
    /// `workers` is clamped to at least 1.
    pub fn new(workers: usize) -> Self {
        ThreadPool { workers: workers.max(1) }
    }

    pub fn with_host_cores() -> Self {
        Self::new(crate::host_cores())
    }
}

impl Executor for ThreadPool {
    fn workers(&self) -> usize {
        self.workers
    }

    fn run_chunks(&self, chunks: usize, job: &(dyn Fn(usize) -> ChunkOutput + Sync)) -> Vec<ChunkOutput> {
        let threads = self.workers.min(chunks);
        if threads <= 1 {
            return (0..chunks).map(job).collect();
        }
        let next = AtomicUsize::new(0);
        let done: Mutex<Vec<(usize, ChunkOutput)>> = Mutex::new(Vec::with_capacity(chunks));
        let work = || {
            let mut local = Vec::new();
            loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= chunks {
                    break;
                }
                local.push((i, job(i)));
            }
            done.lock().expect("chunk result lock").extend(local);
        };
        thread::scope(|s| {
            for _ in 1..threads {
                s.spawn(work);
            }
            work();
        });
        let mut done = done.into_inner().expect("chunk result lock");
        done.sort_unstable_by_key(|(i, _)| *i);
        done.into_iter().map(|(_, out)| out).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gpc_core::parexec::{parallel_map, reduce_sum, try_parallel_map, CHUNK};
    use gpc_core::Sequential;

    #[test]
    fn map_is_identical_across_worker_counts() {
        let n = 5 * CHUNK + 123;
        let want = parallel_map(&Sequential, n, |i| i.wrapping_mul(2654435761) as u32);
        for w in [1, 2, 3, 8] {
            assert_eq!(parallel_map(&ThreadPool::new(w), n, |i| i.wrapping_mul(2654435761) as u32), want);
        }
    }

    #[test]
    fn sum_bits_identical_across_worker_counts() {
        let n = 1_000_000;
        let f = |i: usize| ((i as f64) * 0.618).sin() * 1e3;
        let want = reduce_sum(&Sequential, n, f).to_bits();
        for w in [1, 2, 16] {
            assert_eq!(reduce_sum(&ThreadPool::new(w), n, f).to_bits(), want);
        }
    }

    #[test]
    fn lowest_error_wins() {
        let n = 8 * CHUNK;
        let r: Result<Vec<usize>, usize> =
            try_parallel_map(&ThreadPool::new(4), n, |i| if i % (2 * CHUNK) == 77 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(77));
    }

    #[test]
    fn zero_workers_clamped() {
        assert_eq!(ThreadPool::new(0).workers(), 1);
    }
}
