//! Execution policy for data-parallel loops.
//!
//! [`map_indexed`] evaluates `f(0..n)` and returns the results in index order.
//! With the `parallel` feature the work is spread over the rayon pool; the
//! sequential path is always available and is the only one without the
//! feature. Reductions are done by the caller on the ordered output, so both
//! paths produce bitwise-identical results.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

thread_local! {
    static POLICY: Cell<Option<Execution>> = const { Cell::new(None) };
}

/// Policy in effect on the current thread.
pub fn current() -> Execution {
    POLICY.with(|p| p.get()).unwrap_or_default()
}

/// Runs `f` with `policy` in effect on the current thread.
///
/// Under [`Execution::Sequential`] no work leaves the calling thread, so
/// nested loops inherit the override as well.
pub fn with_policy<R>(policy: Execution, f: impl FnOnce() -> R) -> R {
    let previous = POLICY.with(|p| p.replace(Some(policy)));
    let out = f();
    POLICY.with(|p| p.set(previous));
    out
}

pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match current() {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Like [`map_indexed`] but stops at the first error in index order.
pub fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(n, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let seq = with_policy(Execution::Sequential, || map_indexed(1000, f));
        let par = with_policy(Execution::Parallel, || map_indexed(1000, f));
        assert_eq!(seq, par);
    }

    #[test]
    fn override_is_scoped() {
        let before = current();
        with_policy(Execution::Sequential, || {
            assert_eq!(current(), Execution::Sequential)
        });
        assert_eq!(current(), before);
    }
}
