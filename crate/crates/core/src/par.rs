//! Data-parallel helpers with a sequential fallback.
//!
//! Callers pick an [`Execution`]; `Parallel` runs on the rayon global pool when
//! the `parallel` feature is enabled and degrades to the sequential path
//! otherwise. Results are identical either way; only ordering of work differs.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when work will actually be spread across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Applies `f` to every item, preserving order.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Folds `items` in chunks of `chunk` elements and combines the partial
/// results with `reduce`. `reduce` must be associative and `identity` its
/// neutral element.
pub fn chunked_fold<T, R, ID, F, OP>(exec: Execution, items: &[T], chunk: usize, identity: ID, fold: F, reduce: OP) -> R
where
    T: Sync,
    R: Send,
    ID: Fn() -> R + Sync + Send,
    F: Fn(R, &[T]) -> R + Sync + Send,
    OP: Fn(R, R) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items
            .par_chunks(chunk)
            .map(|c| fold(identity(), c))
            .reduce(&identity, &reduce);
    }
    let _ = exec;
    items.chunks(chunk).fold(identity(), |acc, c| reduce(acc, fold(identity(), c)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_agree() {
        let v: Vec<u64> = (0..10_000).collect();
        for exec in [Execution::Sequential, Execution::Parallel] {
            assert_eq!(map(exec, &v, |x| x * 2)[9_999], 19_998);
            let s = chunked_fold(exec, &v, 97, || 0u64, |a, c| a + c.iter().sum::<u64>(), |a, b| a + b);
            assert_eq!(s, 49_995_000);
        }
    }
}
