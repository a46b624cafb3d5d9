//! Data-parallel helpers with a sequential fallback.
//!
//! Per-document work (parsing, synthesis, matrix construction, scoring) is
//! embarrassingly parallel, so it funnels through [`map_slice`]: with the
//! `parallel` feature (default) it fans out via rayon, without it it runs
//! sequentially. [`map_slice_seq`] is always sequential regardless of
//! features — callers expose it so the two code paths can be compared
//! directly (see the bench suite), and results are position-stable either
//! way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, in parallel when the `parallel` feature is on.
/// Output order matches input order.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
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

/// Sequential twin of [`map_slice`], compiled unconditionally.
pub fn map_slice_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Cap rayon's global pool. Returns an error message if the pool was
/// already initialized (harmless: the earlier setting wins). No-op without
/// the `parallel` feature.
pub fn set_thread_count(threads: usize) -> Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let items: Vec<u64> = (0..1000).collect();
        let f = |x: &u64| x * x + 1;
        assert_eq!(map_slice(&items, f), map_slice_seq(&items, f));
    }

    #[test]
    fn order_is_preserved() {
        let items: Vec<usize> = (0..500).collect();
        let out = map_slice(&items, |&x| x);
        assert_eq!(out, items);
    }
}
