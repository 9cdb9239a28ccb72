//! Ordered block reduction over path indices.
//!
//! Paths are grouped into fixed blocks of [`BLOCK_SIZE`] consecutive
//! indices. Each block is folded in ascending index order, and block
//! results are merged in ascending block order. The grouping never depends
//! on the number of workers, so serial and parallel execution produce
//! bit-identical results.

use serde::{Deserialize, Serialize};

/// Number of consecutive paths folded into one partial result.
///
/// Must stay even: antithetic RTN pairs never straddle a block boundary.
pub const BLOCK_SIZE: usize = 64;

/// How ensemble work is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    /// Single thread, no rayon involvement.
    Serial,
    /// Rayon global pool. Falls back to serial without the `parallel` feature.
    #[default]
    Parallel,
    /// Dedicated rayon pool with a fixed number of workers.
    Workers(usize),
}

/// Folds `0..n` in fixed blocks and merges block results in order.
pub fn reduce_blocks<T, I, F, M>(n: usize, exec: Execution, identity: I, fold: F, merge: M) -> T
where
    T: Send,
    I: Fn() -> T + Sync + Send,
    F: Fn(&mut T, usize) + Sync + Send,
    M: Fn(&mut T, T),
{
    let n_blocks = n.div_ceil(BLOCK_SIZE);
    let run_block = |b: usize| {
        let mut acc = identity();
        let end = ((b + 1) * BLOCK_SIZE).min(n);
        for i in b * BLOCK_SIZE..end {
            fold(&mut acc, i);
        }
        acc
    };
    let partials = map_blocks(n_blocks, exec, &run_block);
    let mut partials = partials.into_iter();
    let mut total = match partials.next() {
        Some(first) => first,
        None => return identity(),
    };
    for p in partials {
        merge(&mut total, p);
    }
    total
}

/// Evaluates `f(i)` for every `i in 0..n`, returning results in index order.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_blocks(n, exec, &f)
}

#[cfg(feature = "parallel")]
fn map_blocks<T, F>(n: usize, exec: Execution, f: &F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    match exec {
        Execution::Serial => (0..n).map(f).collect(),
        Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
        Execution::Workers(w) => match rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build() {
            Ok(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
            Err(_) => (0..n).map(f).collect(),
        },
    }
}

#[cfg(not(feature = "parallel"))]
fn map_blocks<T, F>(n: usize, _exec: Execution, f: &F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_range_yields_identity() {
        let s = reduce_blocks(0, Execution::Serial, || 7u64, |a, i| *a += i as u64, |a, b| *a += b);
        assert_eq!(s, 7);
    }

    #[test]
    fn float_sum_is_worker_independent() {
        let term = |i: usize| ((i as f64) * 0.37).sin() / (1.0 + i as f64);
        let run = |exec| reduce_blocks(10_007, exec, || 0.0f64, |a, i| *a += term(i), |a, b| *a += b);
        let serial = run(Execution::Serial);
        for exec in [Execution::Parallel, Execution::Workers(1), Execution::Workers(3)] {
            assert_eq!(serial.to_bits(), run(exec).to_bits());
        }
    }

    #[test]
    fn small_ranges_fold_in_plain_ascending_order() {
        let xs: Vec<f64> = (0..BLOCK_SIZE).map(|i| 1.0 / (i as f64 + 3.0)).collect();
        let plain = xs.iter().fold(0.0, |a, x| a + x);
        let blocked = reduce_blocks(xs.len(), Execution::Parallel, || 0.0, |a, i| *a += xs[i], |a, b| *a += b);
        assert_eq!(plain.to_bits(), blocked.to_bits());
    }

    #[test]
    fn map_indexed_preserves_order() {
        let v = map_indexed(1000, Execution::Parallel, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }
}
