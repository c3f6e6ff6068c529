//! Deterministic batch parallelism.
//!
//! Work is split into fixed-size chunks that do not depend on the worker
//! count; each chunk reduces its samples sequentially, chunk results come
//! back in chunk order, and the caller folds them sequentially. Floating
//! point sums are therefore bit-identical whether the chunks ran on one
//! thread or eight.
//!
//! With the `parallel` feature (default) chunks run on rayon; without it, or
//! with `workers == 1`, everything runs inline on the caller's thread.

/// Samples per gradient chunk. Fixed so that reduction order — and thus
/// every floating-point sum — is independent of the worker count.
pub const GRAD_CHUNK: usize = 8;

/// Maps `f` over fixed-size chunks of `items`, returning results in chunk
/// order. `workers == 1` forces the sequential path; any other value uses
/// the current rayon pool (see [`with_pool`]).
pub fn map_chunks<T, R, F>(workers: usize, items: &[T], chunk: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &[T]) -> R + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if workers != 1 {
            use rayon::prelude::*;
            return items
                .par_chunks(chunk)
                .enumerate()
                .map(|(i, c)| f(i, c))
                .collect();
        }
    }
    let _ = workers;
    items.chunks(chunk).enumerate().map(|(i, c)| f(i, c)).collect()
}

/// Runs `body` inside a rayon pool of `workers` threads. `0` uses the global
/// default pool; `1` runs `body` directly with no pool involved.
pub fn with_pool<R: Send>(workers: usize, body: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if workers > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .expect("building worker pool");
            return pool.install(body);
        }
    }
    body()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chunk_sums(workers: usize, items: &[f64]) -> f64 {
        let parts = map_chunks(workers, items, GRAD_CHUNK, |_i, c| c.iter().sum::<f64>());
        parts.into_iter().sum()
    }

    #[test]
    fn sums_are_identical_across_worker_counts() {
        // values chosen so summation order matters in f64
        let items: Vec<f64> = (0..1000)
            .map(|i| 1e16 * ((i % 7) as f64) + 1.0 / (i + 1) as f64)
            .collect();
        let seq = chunk_sums(1, &items);
        for workers in [0, 2, 3, 8] {
            let par = with_pool(workers, || chunk_sums(workers, &items));
            assert_eq!(seq.to_bits(), par.to_bits(), "workers={workers}");
        }
    }

    #[test]
    fn chunk_indices_arrive_in_order() {
        let items: Vec<u32> = (0..50).collect();
        let idx = map_chunks(0, &items, 8, |i, _c| i);
        assert_eq!(idx, (0..7).collect::<Vec<_>>());
    }
}
