//! Data-parallel map with a sequential fallback.
//!
//! Batch evaluation, per-sample gradient computation, and experiment
//! sweeps are all independent per item, so they run through
//! [`par_map`]. Results come back in input order, and any reduction the
//! caller does afterwards is sequential over that order, so numeric
//! results are identical with the `parallel` feature on or off.

/// Map `f` over `items`, in parallel when the `parallel` feature is
/// enabled. Output order always matches input order.
#[cfg(feature = "parallel")]
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_iter().map(f).collect()
}

/// Always-sequential map with the same signature as [`par_map`]; the
/// benchmarks compare the two directly.
pub fn seq_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_iter().map(f).collect()
}
