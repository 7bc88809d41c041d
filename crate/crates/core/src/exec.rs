//! Trial-level data parallelism.
//!
//! Every Monte Carlo loop in the crate goes through [`map_indexed`], which
//! evaluates a closure on `0..count` and returns results in index order. With
//! the `parallel` feature the work is spread over the rayon pool; without it
//! (or with [`Execution::Sequential`]) the same closure runs in a plain loop.
//! Results are identical either way because each index owns its RNG stream and
//! callers only aggregate in index order.

/// How to run an index-parallel workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `true` when this build can actually run work in parallel.
    pub fn is_parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

pub fn map_indexed<T, F>(exec: Execution, count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..count).into_par_iter().map(f).collect()
        }
        _ => (0..count).map(f).collect(),
    }
}

/// Parallel map over a slice, order preserving.
pub fn map_slice<S, T, F>(exec: Execution, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let a = map_indexed(Execution::Sequential, 1000, |i| i * i);
        let b = map_indexed(Execution::Parallel, 1000, |i| i * i);
        assert_eq!(a, b);
    }
}
