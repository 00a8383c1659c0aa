//! Deterministic execution helpers: data-parallel inner loops with a
//! sequential fallback.
//!
//! Results never depend on the thread count. Order-sensitive reductions go
//! through [`fold_chunks`], which splits the input into fixed-size chunks,
//! folds each chunk sequentially in index order, and hands the per-chunk
//! accumulators back in chunk order for a sequential merge. The grouping is a
//! function of the input length alone, so one thread and sixteen threads
//! produce identical bits.
//!
//! Parallelism is gated twice: the `parallel` cargo feature compiles the
//! rayon path in, and the runtime thread cap (default 1, settable via
//! [`set_max_threads`] or the `MOON_THREADS` environment variable) switches
//! it on.

use std::sync::atomic::{AtomicUsize, Ordering};

/// Fixed chunk length for order-stable reductions.
pub const REDUCTION_CHUNK: usize = 8;

static MAX_THREADS: AtomicUsize = AtomicUsize::new(1);

/// Caps worker threads; `1` forces the sequential path.
pub fn set_max_threads(n: usize) {
    MAX_THREADS.store(n.max(1), Ordering::SeqCst);
    #[cfg(feature = "parallel")]
    if n > 1 {
        // First build wins; later calls only adjust the soft cap above.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

/// Reads `MOON_THREADS` (default 1) and applies it.
pub fn init_from_env() {
    let n = std::env::var("MOON_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(1);
    set_max_threads(n);
}

pub fn max_threads() -> usize {
    MAX_THREADS.load(Ordering::SeqCst)
}

fn parallel_active() -> bool {
    cfg!(feature = "parallel") && max_threads() > 1
}

/// Order-preserving map over a slice.
pub fn map_collect<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    #[cfg(feature = "parallel")]
    if parallel_active() {
        use rayon::prelude::*;
        return items.par_iter().map(&f).collect();
    }
    let _ = parallel_active();
    items.iter().map(f).collect()
}

/// Folds `items` chunk by chunk and returns one accumulator per chunk, in
/// chunk order. Callers merge the accumulators sequentially.
pub fn fold_chunks<T, A, I, F>(items: &[T], init: I, fold: F) -> Vec<A>
where
    T: Sync,
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(A, &T) -> A + Sync,
{
    let run_chunk = |chunk: &[T]| chunk.iter().fold(init(), &fold);
    #[cfg(feature = "parallel")]
    if parallel_active() {
        use rayon::prelude::*;
        return items.par_chunks(REDUCTION_CHUNK).map(run_chunk).collect();
    }
    items.chunks(REDUCTION_CHUNK).map(run_chunk).collect()
}

/// Sequential reference paths, exported for the benchmark suite.
pub mod seq {
    use super::REDUCTION_CHUNK;

    pub fn map_collect<T, R, F: Fn(&T) -> R>(items: &[T], f: F) -> Vec<R> {
        items.iter().map(f).collect()
    }

    pub fn fold_chunks<T, A, I: Fn() -> A, F: Fn(A, &T) -> A>(
        items: &[T],
        init: I,
        fold: F,
    ) -> Vec<A> {
        items
            .chunks(REDUCTION_CHUNK)
            .map(|chunk| chunk.iter().fold(init(), &fold))
            .collect()
    }
}
