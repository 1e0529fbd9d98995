//! Deterministic per-path random streams and order-independent reductions.
//!
//! Path `i` always draws from ChaCha8 seeded with the run seed on stream `i`,
//! so results do not depend on how paths are spread over workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Generator for path `path` of a run with seed `seed`.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Pairwise (cascade) summation; the result depends only on the slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() == 1 {
        return Ok((mean, 0.0));
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Evaluates `f(0..n)` on `workers` threads and returns the results in index order.
///
/// `workers == 1` runs inline on the calling thread.
pub fn par_map_indexed<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = path_rng(7, 3).random();
        let b: u64 = path_rng(7, 3).random();
        let c: u64 = path_rng(7, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn pairwise_matches_exact_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }

    #[test]
    fn constant_sample_has_zero_stderr() {
        let (m, se) = mean_and_stderr(&[2.5; 10]).unwrap();
        assert_eq!(m, 2.5);
        assert_eq!(se, 0.0);
        assert!(matches!(mean_and_stderr(&[]), Err(Error::EmptySample)));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let f = |i: usize| -> Result<f64> {
            let mut r = path_rng(1, i as u64);
            Ok(r.random::<f64>())
        };
        let one = par_map_indexed(1000, 1, f).unwrap();
        let four = par_map_indexed(1000, 4, f).unwrap();
        assert_eq!(pairwise_sum(&one).to_bits(), pairwise_sum(&four).to_bits());
    }
}
