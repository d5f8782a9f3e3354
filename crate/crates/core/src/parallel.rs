//! Running independent jobs (grid cells, compared methods, Monte Carlo
//! seeds) either on a rayon pool or sequentially. Results always come back
//! in input order.

use crate::error::{argument, Result};

/// Environment variable consulted when no thread count is given.
pub const THREADS_ENV: &str = "POLYAK_OPT_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon pool with the given number of threads; `0` lets rayon decide.
    Parallel {
        threads: usize,
    },
}

impl Execution {
    /// Parallel when the `parallel` feature is on and more than one thread
    /// is requested (or the count is left to rayon), sequential otherwise.
    pub fn from_threads(threads: Option<usize>) -> Self {
        match threads {
            Some(1) => Execution::Sequential,
            _ if !cfg!(feature = "parallel") => Execution::Sequential,
            Some(t) => Execution::Parallel { threads: t },
            None => Execution::Parallel { threads: 0 },
        }
    }

    /// Resolves `--threads`, falling back to [`THREADS_ENV`].
    pub fn resolve(cli_threads: Option<usize>) -> Result<Self> {
        let threads = match cli_threads {
            Some(t) => Some(t),
            None => match std::env::var(THREADS_ENV) {
                Ok(v) if !v.trim().is_empty() => Some(v.trim().parse::<usize>().map_err(|_| {
                    argument(format!("{THREADS_ENV} must be a thread count, got `{v}`"))
                })?),
                _ => None,
            },
        };
        Ok(Self::from_threads(threads))
    }

    /// Applies `f` to every item, preserving order.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match *self {
            Execution::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel { threads } => {
                use rayon::prelude::*;
                let run = || items.par_iter().map(&f).collect();
                if threads == 0 {
                    run()
                } else {
                    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                        Ok(pool) => pool.install(run),
                        Err(_) => items.iter().map(&f).collect(),
                    }
                }
            }
            #[cfg(not(feature = "parallel"))]
            Execution::Parallel { .. } => items.iter().map(f).collect(),
        }
    }
}
