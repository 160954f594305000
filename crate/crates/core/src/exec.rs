//! Block-structured execution of independent work items.
//!
//! Results always come back in item order, so any floating-point reduction
//! done by the caller over the returned vector is independent of the number
//! of worker threads.

/// Trials per Monte Carlo block. Each block owns one random substream.
pub const DEFAULT_BLOCK: u64 = 8192;

/// Runs `f(block_index, block_len)` for every block of `trials` and returns
/// the results in block order.
pub fn run_blocks<T, F>(trials: u64, block: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, u64) -> T + Sync + Send,
{
    assert!(block > 0, "block size must be positive");
    let nblocks = trials.div_ceil(block);
    let len_of = |b: u64| block.min(trials - b * block);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..nblocks).into_par_iter().map(|b| f(b, len_of(b))).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..nblocks).map(|b| f(b, len_of(b))).collect()
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map_items<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Runs `f` on a pool of `threads` workers. `threads == 0` uses the global
/// pool. Without the `parallel` feature the closure simply runs inline.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if threads == 0 {
            return f();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

/// Whether this build can run work items concurrently.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_cover_all_trials_in_order() {
        let got = run_blocks(20_001, 1000, |b, n| (b, n));
        assert_eq!(got.len(), 21);
        assert_eq!(got[20], (20, 1));
        assert_eq!(got.iter().map(|p| p.1).sum::<u64>(), 20_001);
        assert!(got.windows(2).all(|w| w[0].0 + 1 == w[1].0));
        assert!(run_blocks(0, 10, |b, _| b).is_empty());
    }

    #[test]
    fn thread_count_does_not_change_reduction() {
        let work = |b: u64, n: u64| (0..n).map(|i| ((b * 7919 + i) as f64).sin()).sum::<f64>();
        let one = with_threads(1, || run_blocks(100_000, 777, work).iter().sum::<f64>());
        let many = with_threads(3, || run_blocks(100_000, 777, work).iter().sum::<f64>());
        assert_eq!(one.to_bits(), many.to_bits());
    }
}
