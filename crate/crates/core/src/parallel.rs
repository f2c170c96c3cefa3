//! Data-parallel helpers with a sequential fallback.
//!
//! The `parallel` feature (on by default) backs these with rayon. Disabling it
//! leaves single-threaded implementations with identical results: all
//! aggregation is order-independent or re-sequenced after the parallel stage.
//! The criterion bench suite compares both paths through [`ExecMode`].

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Explicit mode selector, used by benchmarks; library entry points use
/// [`map_indexed`], which picks the default for the build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl ExecMode {
    pub fn default_mode() -> Self {
        #[cfg(feature = "parallel")]
        {
            ExecMode::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            ExecMode::Sequential
        }
    }
}

thread_local! {
    static MODE_OVERRIDE: std::cell::Cell<Option<ExecMode>> = const { std::cell::Cell::new(None) };
}

/// Run `f` with every [`map_indexed`] call on this thread forced to `mode`.
/// Used by the bench suite to compare the two execution paths on identical
/// inputs.
pub fn with_mode<T>(mode: ExecMode, f: impl FnOnce() -> T) -> T {
    MODE_OVERRIDE.with(|m| m.set(Some(mode)));
    let out = f();
    MODE_OVERRIDE.with(|m| m.set(None));
    out
}

/// Map `f` over `0..n`, returning results in index order.
pub fn map_indexed<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    let mode = MODE_OVERRIDE
        .with(|m| m.get())
        .unwrap_or_else(ExecMode::default_mode);
    map_indexed_mode(mode, n, f)
}

pub fn map_indexed_mode<T: Send>(
    mode: ExecMode,
    n: usize,
    f: impl Fn(usize) -> T + Sync + Send,
) -> Vec<T> {
    match mode {
        ExecMode::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => (0..n).into_par_iter().map(f).collect(),
    }
}

/// Cap the number of rayon workers for the whole process. Returns false if the
/// global pool was already initialized.
pub fn limit_threads(n: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        true
    }
}
