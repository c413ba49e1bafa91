//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (the default) these dispatch to rayon; without
//! it they run the same closures on the calling thread. Callers never branch on
//! the feature themselves.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// True when the crate was built with rayon support.
#[inline]
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Number of workers a parallel section will use.
pub fn workers() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

pub fn flat_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Vec<R> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().flat_map_iter(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().flat_map(f).collect()
    }
}

/// Splits `items` into about one chunk per worker, folds each chunk into its
/// own accumulator and merges the accumulators.
pub fn chunked_fold<T, A, I, F, M>(items: &[T], init: I, fold: F, merge: M) -> A
where
    T: Sync,
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, &T) + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    let chunk = items.len().div_ceil(workers().max(1)).max(1);
    #[cfg(feature = "parallel")]
    {
        items
            .par_chunks(chunk)
            .map(|c| {
                let mut acc = init();
                for t in c {
                    fold(&mut acc, t);
                }
                acc
            })
            .reduce(&init, &merge)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = (chunk, &merge);
        let mut acc = init();
        for t in items {
            fold(&mut acc, t);
        }
        acc
    }
}

pub fn sort_unstable<T: Ord + Send>(items: &mut [T]) {
    #[cfg(feature = "parallel")]
    {
        items.par_sort_unstable()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.sort_unstable()
    }
}

/// Runs two closures, concurrently when possible.
pub fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    {
        rayon::join(a, b)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (a(), b())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_fold_matches_sequential_sum() {
        let v: Vec<u64> = (1..=10_000).collect();
        let s = chunked_fold(&v, || 0u64, |a, x| *a += x, |a, b| a + b);
        assert_eq!(s, 10_000 * 10_001 / 2);
    }

    #[test]
    fn map_preserves_order() {
        let v: Vec<usize> = (0..1000).collect();
        assert_eq!(map(&v, |x| x * 2), map_range(1000, |i| i * 2));
    }
}
