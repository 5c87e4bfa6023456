//! Batch execution of independent runs. Results always come back in job order.

use crate::error::Result;

/// Runs `f(0..n)` one after another.
pub fn run_batch_sequential<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T>,
{
    (0..n).map(f).collect()
}

/// Runs `f(0..n)` on a rayon pool with `workers` threads (all cores when `None`).
#[cfg(feature = "parallel")]
pub fn run_batch_parallel<T, F>(n: usize, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| crate::Error::Invalid(format!("cannot start worker pool: {e}")))?;
    let out: Vec<Result<T>> = pool.install(|| (0..n).into_par_iter().map(&f).collect());
    // First failure in job order, so errors do not depend on scheduling.
    out.into_iter().collect()
}

/// Parallel when the `parallel` feature is on, sequential otherwise.
pub fn run_batch<T, F>(n: usize, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if workers != Some(1) {
            return run_batch_parallel(n, workers, f);
        }
    }
    let _ = workers;
    run_batch_sequential(n, f)
}
