//! Execution strategy for the data-parallel loops (clients within a round,
//! repetitions of an experiment, chunked batch evaluation).
//!
//! With the `parallel` feature the work is spread over rayon's pool; without
//! it every call runs sequentially. Results always come back in index order,
//! so callers that reduce them in that order get identical bits either way.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Serial,
    #[default]
    Parallel,
}

impl ExecMode {
    /// True when this mode will actually fan out work.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// Evaluate `f(0..n)` and collect the results in index order.
pub fn map_indexed<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() && n > 1 {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Run `f` inside a pool capped at `threads` workers.
///
/// `None` uses the global pool. Without the `parallel` feature this simply
/// calls `f`.
pub fn with_threads<T, F>(threads: Option<usize>, f: F) -> T
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => return pool.install(f),
            Err(e) => log::warn!("could not build a {n}-thread pool ({e}); using the global pool"),
        }
    }
    let _ = threads;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let a = map_indexed(ExecMode::Serial, 100, |i| i * i);
        let b = with_threads(Some(4), || map_indexed(ExecMode::Parallel, 100, |i| i * i));
        assert_eq!(a, b);
        assert_eq!(a[9], 81);
    }
}
