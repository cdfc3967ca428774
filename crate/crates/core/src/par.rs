//! Order-preserving map helpers with a rayon and a sequential implementation.
//!
//! The default `map_*` functions dispatch on the `parallel` feature. Both
//! implementations are always available so benchmarks can compare them; the
//! outputs are identical because the parallel path collects in input order
//! and any reductions happen sequentially afterwards.

/// Sequential reference implementation.
pub fn map_collect_seq<T: Sync, R: Send, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Sequential indexed map.
pub fn map_indexed_seq<T: Sync, R: Send, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(usize, &T) -> R + Sync + Send,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

#[cfg(feature = "parallel")]
pub fn map_collect_par<T: Sync, R: Send, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_indexed_par<T: Sync, R: Send, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(usize, &T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Maps over items, in parallel when the `parallel` feature is enabled.
pub fn map_collect<T: Sync, R: Send, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_collect_par(items, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_collect_seq(items, f)
    }
}

/// Indexed variant of [`map_collect`].
pub fn map_indexed<T: Sync, R: Send, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_indexed_par(items, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(items, f)
    }
}
