//! Data-parallel loop helpers with a sequential fallback.
//!
//! With the `parallel` feature enabled the helpers dispatch to rayon unless
//! disabled at runtime via [`set_parallel`]; without the feature they compile
//! straight to sequential loops and rayon is not linked at all.
//!
//! Both paths are bit-identical: work is split into disjoint output regions
//! and every element is computed with a fixed reduction order, so thread
//! scheduling can never change results. The runtime switch exists so the
//! criterion benches can compare both paths in one binary.

#[cfg(feature = "parallel")]
use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
static PARALLEL_ENABLED: AtomicBool = AtomicBool::new(true);

/// Enable or disable the rayon paths at runtime. No-op without the
/// `parallel` feature.
pub fn set_parallel(enabled: bool) {
    #[cfg(feature = "parallel")]
    PARALLEL_ENABLED.store(enabled, Ordering::Relaxed);
    #[cfg(not(feature = "parallel"))]
    let _ = enabled;
}

/// Whether the rayon paths are currently active.
pub fn parallel_enabled() -> bool {
    #[cfg(feature = "parallel")]
    {
        PARALLEL_ENABLED.load(Ordering::Relaxed)
    }
    #[cfg(not(feature = "parallel"))]
    {
        false
    }
}

/// Split `data` into consecutive chunks of `chunk_len` and run `f(chunk_index,
/// chunk)` on each. `data.len()` must be a multiple of `chunk_len`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    debug_assert!(chunk_len > 0 && data.len() % chunk_len == 0);
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    for (i, c) in data.chunks_mut(chunk_len).enumerate() {
        f(i, c);
    }
}

/// Sequential twin of [`for_each_chunk_mut`]; used by the benches as the
/// baseline regardless of the runtime switch.
pub fn for_each_chunk_mut_seq<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [T]),
{
    debug_assert!(chunk_len > 0 && data.len() % chunk_len == 0);
    for (i, c) in data.chunks_mut(chunk_len).enumerate() {
        f(i, c);
    }
}

/// Map each index in `0..n` to a value, preserving order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_matches_sequential() {
        let work = |i: usize, c: &mut [f32]| {
            for (j, v) in c.iter_mut().enumerate() {
                *v = (i * 31 + j) as f32 * 0.5;
            }
        };
        let mut a = vec![0.0f32; 64];
        let mut b = vec![0.0f32; 64];
        for_each_chunk_mut(&mut a, 8, work);
        for_each_chunk_mut_seq(&mut b, 8, work);
        assert_eq!(a, b);
    }

    #[test]
    fn runtime_switch_round_trips() {
        let was = parallel_enabled();
        set_parallel(false);
        assert!(!parallel_enabled());
        set_parallel(was);
    }

    #[test]
    fn map_indexed_preserves_order() {
        let v = map_indexed(10, |i| i * i);
        assert_eq!(v, vec![0, 1, 4, 9, 16, 25, 36, 49, 64, 81]);
    }
}
