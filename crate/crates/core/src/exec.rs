//! Parallel dispatch for embarrassingly parallel inner loops: gradient-check
//! perturbations and sweep/ablation cells. With the default `parallel`
//! feature the work fans out over rayon; without it (or inside
//! [`sequential`]) the same closures run on one thread. Results are returned
//! in input order either way, so outputs are identical.

use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Map `f` over `items`, in parallel when available.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !FORCE_SEQUENTIAL.load(Ordering::Relaxed) {
            return items.par_iter().map(f).collect();
        }
    }
    map_slice_seq(items, f)
}

/// Single-threaded twin of [`map_slice`]; always available so benchmarks can
/// compare the two directly.
pub fn map_slice_seq<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Run `f` with parallel dispatch disabled process-wide. Intended for
/// benchmarks and A/B tests; the flag is global, so concurrent callers see it
/// too (the results are identical either way, only the scheduling changes).
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    FORCE_SEQUENTIAL.store(true, Ordering::SeqCst);
    let out = f();
    FORCE_SEQUENTIAL.store(false, Ordering::SeqCst);
    out
}
