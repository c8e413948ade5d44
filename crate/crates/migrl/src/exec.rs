//! Execution-strategy shim: rayon when the `parallel` feature is on,
//! plain iterators otherwise.
//!
//! Callers must keep each work item self-contained (own RNG, no shared
//! mutable state) and must perform any floating-point reduction over the
//! returned vector in index order, so results do not depend on thread
//! scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, preserving index order in the output.
#[cfg(feature = "parallel")]
pub(crate) fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

/// Maps `f` over a slice, preserving element order in the output.
#[cfg(feature = "parallel")]
pub(crate) fn map_slice<'a, T, R, F>(items: &'a [T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&'a T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_slice<'a, T, R, F>(items: &'a [T], f: F) -> Vec<R>
where
    F: Fn(&'a T) -> R,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_indices_preserves_order() {
        let out = map_indices(100, |i| i * i);
        assert_eq!(out[7], 49);
        assert_eq!(out.len(), 100);
    }

    #[test]
    fn map_slice_preserves_order() {
        let xs = vec![3, 1, 4, 1, 5];
        assert_eq!(map_slice(&xs, |x| x + 1), vec![4, 2, 5, 2, 6]);
    }
}
