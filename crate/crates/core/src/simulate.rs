//! Seeded Monte Carlo replications.

use rayon::prelude::*;

/// Runs `f(index, seed_base + index)` for every replication, in parallel,
/// returning results in index order.
pub fn replicate<T, F>(reps: usize, seed_base: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, u64) -> T + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|i| f(i, seed_base.wrapping_add(i as u64)))
        .collect()
}

/// Share of `true` values.
pub fn frequency(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        return f64::NAN;
    }
    flags.iter().filter(|b| **b).count() as f64 / flags.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}
