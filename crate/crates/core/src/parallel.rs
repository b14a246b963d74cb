//! Batch-parallel map helpers.
//!
//! Work is partitioned per item and results are collected in item order, so
//! every caller is parallelism-invariant: the same bytes come out whether the
//! `parallel` feature is enabled, and whatever the worker count. With the
//! feature disabled everything runs sequentially.

/// Cap the global worker pool. Call once at startup; later calls are ignored
/// (rayon's global pool can only be built once). No-op in sequential builds.
#[cfg(feature = "parallel")]
pub fn set_threads(n: usize) {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}

#[cfg(not(feature = "parallel"))]
pub fn set_threads(_n: usize) {}

/// Map `f` over `0..n`, returning results in index order.
#[cfg(feature = "parallel")]
pub fn par_map_indexed<U: Send>(n: usize, f: impl Fn(usize) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, returning results in index order.
#[cfg(not(feature = "parallel"))]
pub fn par_map_indexed<U>(n: usize, f: impl Fn(usize) -> U + Sync) -> Vec<U> {
    (0..n).map(f).collect()
}

/// Sequential reference map with identical semantics to [`par_map_indexed`];
/// exists so benchmarks can compare the two code paths in one build.
pub fn seq_map_indexed<U>(n: usize, f: impl Fn(usize) -> U) -> Vec<U> {
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_index_order() {
        let out = par_map_indexed(100, |i| i * i);
        let expected: Vec<usize> = (0..100).map(|i| i * i).collect();
        assert_eq!(out, expected);
    }

    #[test]
    fn matches_sequential_reference() {
        let p = par_map_indexed(64, |i| (i as f64).sqrt());
        let s = seq_map_indexed(64, |i| (i as f64).sqrt());
        assert_eq!(p, s);
    }
}
