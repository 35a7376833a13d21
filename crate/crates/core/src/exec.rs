//! Data-parallel map with a sequential fallback.
//!
//! The heavy suites (pairing tables, phase-series grids, residue grids) are
//! independent-task maps. With the `parallel` feature (default) they fan out
//! through rayon; without it the same call runs a plain loop. Results are
//! collected in input order either way, so output bytes do not depend on the
//! thread count.

/// Sequential map, always available (benchmark baseline).
pub fn map_seq<T, U>(items: &[T], f: impl Fn(&T) -> U) -> Vec<U> {
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map<T, U>(items: &[T], f: impl Fn(&T) -> U + Send + Sync) -> Vec<U>
where
    T: Sync,
    U: Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, U>(items: &[T], f: impl Fn(&T) -> U + Send + Sync) -> Vec<U>
where
    T: Sync,
    U: Send,
{
    map_seq(items, f)
}
