//! Execution-mode switch between the rayon data-parallel path and the
//! sequential fallback.
//!
//! Both paths produce identical, order-normalized results; the criterion
//! bench suite compares their throughput. Without the `parallel` feature the
//! crate builds sequential-only.

/// How embarrassingly-parallel stages (grid sweeps, suite executions,
/// repetitions) are driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for ExecMode {
    #[cfg(feature = "parallel")]
    fn default() -> Self {
        ExecMode::Parallel
    }

    #[cfg(not(feature = "parallel"))]
    fn default() -> Self {
        ExecMode::Sequential
    }
}

/// Maps `f` over `items`, preserving input order in the output.
pub fn map_indexed<T, U, F>(mode: ExecMode, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    match mode {
        ExecMode::Sequential => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
        }
    }
}

/// Maps `f` over a contiguous index range, preserving index order.
pub fn map_range<U, F>(mode: ExecMode, n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_preserve_order() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = map_indexed(ExecMode::Sequential, &items, |i, v| i as u64 + v * 3);
        #[cfg(feature = "parallel")]
        {
            let par = map_indexed(ExecMode::Parallel, &items, |i, v| i as u64 + v * 3);
            assert_eq!(seq, par);
        }
        assert_eq!(seq[10], 40);
        let seq_r = map_range(ExecMode::Sequential, 100, |i| i * i);
        #[cfg(feature = "parallel")]
        {
            let par_r = map_range(ExecMode::Parallel, 100, |i| i * i);
            assert_eq!(seq_r, par_r);
        }
        assert_eq!(seq_r[7], 49);
    }
}
