//! Evaluation pool for batch work (sweep points, per-pair key rates).
//!
//! Every job is a pure function of its input, and results are collected in
//! input order, so output does not depend on the executor or worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How independent jobs are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Executor {
    /// In-order evaluation on the calling thread.
    #[default]
    Sequential,
    /// Rayon data-parallel evaluation. `workers = None` uses the global pool.
    #[cfg(feature = "parallel")]
    Parallel { workers: Option<usize> },
}

impl Executor {
    /// `0` means "all cores", `1` forces sequential evaluation. Without the
    /// `parallel` feature every request is sequential.
    pub fn with_workers(workers: usize) -> Self {
        #[cfg(feature = "parallel")]
        {
            match workers {
                0 => Executor::Parallel { workers: None },
                1 => Executor::Sequential,
                n => Executor::Parallel { workers: Some(n) },
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = workers;
            Executor::Sequential
        }
    }

    pub fn is_parallel(&self) -> bool {
        !matches!(self, Executor::Sequential)
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match *self {
            Executor::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Executor::Parallel { workers: None } => items.par_iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Executor::Parallel { workers: Some(n) } => {
                match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                    Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
                    Err(_) => items.iter().map(f).collect(),
                }
            }
        }
    }

    /// Like [`Executor::map`] but stops at the first error (in input order for
    /// the sequential path; any failing item for the parallel path).
    pub fn try_map<T, R, E, F>(&self, items: &[T], f: F) -> Result<Vec<R>, E>
    where
        T: Sync,
        R: Send,
        E: Send,
        F: Fn(&T) -> Result<R, E> + Sync + Send,
    {
        match *self {
            Executor::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Executor::Parallel { .. } => self.map(items, f).into_iter().collect(),
        }
    }
}
