//! Parallel map helpers with a sequential fallback.
//!
//! Every parallel loop in the crate goes through `map`, which collects
//! results in index order, so outputs never depend on the worker count.

use std::sync::atomic::{AtomicBool, Ordering};

static SEQUENTIAL: AtomicBool = AtomicBool::new(false);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Parallel,
    Sequential,
}

pub fn set_mode(mode: Mode) {
    SEQUENTIAL.store(mode == Mode::Sequential, Ordering::SeqCst);
}

pub fn mode() -> Mode {
    if cfg!(feature = "parallel") && !SEQUENTIAL.load(Ordering::SeqCst) {
        Mode::Parallel
    } else {
        Mode::Sequential
    }
}

/// Environment variable read by `init_threads`.
pub const THREADS_ENV: &str = "PPA_THREADS";

/// Configure the global worker pool from `PPA_THREADS` (if set).
/// `PPA_THREADS=1` also switches to the sequential path.
pub fn init_threads() {
    let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) else {
        return;
    };
    if n <= 1 {
        set_mode(Mode::Sequential);
        return;
    }
    #[cfg(feature = "parallel")]
    {
        // a second initialisation attempt is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Map `f` over `0..n`, results in index order.
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if mode() == Mode::Parallel && n > 1 {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Like `map` but short-circuits on the first error (by index order).
pub fn try_map<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map(n, f).into_iter().collect()
}
