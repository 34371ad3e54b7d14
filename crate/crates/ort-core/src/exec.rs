//! Data-parallel execution seam.
//!
//! Every embarrassingly-parallel loop in the crate funnels through [`map`],
//! which dispatches to rayon when the `parallel` feature is enabled (the
//! default) and to a plain sequential loop otherwise. [`map_seq`] and
//! [`map_par`] are always available so benchmarks can compare both paths in
//! one binary.

/// Map `f` over `items`, sequentially, preserving order.
pub fn map_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Map `f` over `items` with rayon, preserving order.
#[cfg(feature = "parallel")]
pub fn map_par<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

/// Map `f` over `items` using the configured execution strategy.
///
/// Output order always matches input order regardless of strategy, so callers
/// may rely on positional correspondence.
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_par(items, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_seq(items, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let items: Vec<u64> = (0..10_000).collect();
        let out = map(&items, |x| x * 2);
        for (i, v) in out.iter().enumerate() {
            assert_eq!(*v, items[i] * 2);
        }
    }

    #[test]
    fn seq_and_default_agree() {
        let items: Vec<String> = (0..500).map(|i| format!("item-{i}")).collect();
        let a = map_seq(&items, |s| s.len());
        let b = map(&items, |s| s.len());
        assert_eq!(a, b);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn par_and_seq_agree() {
        let items: Vec<i32> = (-1000..1000).collect();
        let a = map_seq(&items, |x| x.wrapping_mul(7) ^ 3);
        let b = map_par(&items, |x| x.wrapping_mul(7) ^ 3);
        assert_eq!(a, b);
    }
}
