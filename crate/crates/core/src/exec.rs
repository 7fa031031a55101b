//! Per-particle work distribution.
//!
//! With the `parallel` feature, [`Execution::Parallel`] fans particle work out
//! over the rayon pool; without it every mode runs on the calling thread.
//! Results are always returned in particle order and each particle only ever
//! touches its own [`RngStream`], so output is identical across modes.

use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn map_indexed<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..len).into_par_iter().map(f).collect()
            }
            _ => (0..len).map(f).collect(),
        }
    }

    pub fn map_streams<T, F>(self, streams: &mut [RngStream], f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &mut RngStream) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                streams
                    .par_iter_mut()
                    .enumerate()
                    .map(|(j, s)| f(j, s))
                    .collect()
            }
            _ => streams
                .iter_mut()
                .enumerate()
                .map(|(j, s)| f(j, s))
                .collect(),
        }
    }
}
