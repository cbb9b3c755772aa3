//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (the default) the helpers fan work out over
//! rayon's current thread pool; without it they run sequentially. Results are
//! always collected in input order, so callers that derive per-task seeds up
//! front get identical output either way.
//!
//! [`force_sequential`] flips a process-wide switch that bypasses rayon even
//! when the feature is compiled in. The CLI uses it for `--jobs 1` and the
//! benches use it to compare both execution paths in a single binary.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQ: AtomicBool = AtomicBool::new(false);

/// Bypass rayon at runtime. Has no effect when the `parallel` feature is off
/// (execution is always sequential there).
pub fn force_sequential(yes: bool) {
    FORCE_SEQ.store(yes, Ordering::Relaxed);
}

/// True when work will actually be fanned out over a thread pool.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQ.load(Ordering::Relaxed)
}

/// Map over a slice, collecting results in input order.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(&f).collect();
        }
    }
    items.iter().map(f).collect()
}

/// Map over `0..n`, collecting results in index order.
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(&f).collect();
        }
    }
    (0..n).map(f).collect()
}
