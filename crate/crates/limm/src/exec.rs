//! Execution-mode selection for embarrassingly parallel sweeps (convergence
//! studies, work-precision diagrams, random coefficient scans).
//!
//! With the default `parallel` feature the work is distributed with rayon;
//! the `Sequential` mode (and builds without the feature) run the same code
//! on one thread. Results are identical either way — the mode only selects
//! the scheduler.

/// How sweep-style workloads are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    /// Distribute items across a rayon thread pool (requires the `parallel`
    /// feature; falls back to sequential otherwise).
    Parallel,
    /// Process items in order on the calling thread.
    Sequential,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

/// Applies `f` to every item, in parallel when `mode` requests it and the
/// `parallel` feature is enabled. Output order matches input order.
pub fn map_items<T, U, F>(mode: ExecMode, items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            items.into_par_iter().map(f).collect()
        }
        #[cfg(not(feature = "parallel"))]
        ExecMode::Parallel => items.into_iter().map(f).collect(),
        ExecMode::Sequential => items.into_iter().map(f).collect(),
    }
}

/// Configures the global rayon pool to `n` threads. Call at most once, before
/// any parallel work; ignored without the `parallel` feature.
pub fn configure_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
}
