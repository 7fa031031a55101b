//! Reproducible random-number streams.
//!
//! Every stream is a ChaCha8 generator keyed by the run seed and positioned on
//! its own 64-bit stream id, so particle `j` draws the same Brownian path no
//! matter how many workers share the ensemble or in which order they run.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{FilterError, Result};

/// What a stream is used for. Folded into the high bits of the stream id so
/// that, e.g., particle 3's prediction noise never aliases the truth path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamPurpose {
    Prediction = 1,
    InitialEnsemble = 2,
    Truth = 3,
    Measurement = 4,
    Perturbation = 5,
    Forcing = 6,
}

pub fn stream_id(purpose: StreamPurpose, index: u64) -> u64 {
    debug_assert!(index < (1 << 48));
    ((purpose as u64) << 48) | index
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn for_purpose(seed: u64, purpose: StreamPurpose, index: u64) -> Self {
        Self::new(seed, stream_id(purpose, index))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Position in the underlying keystream, in 32-bit words.
    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn normal_vector(&mut self, len: usize, std: f64) -> DVector<f64> {
        DVector::from_fn(len, |_, _| std * self.standard_normal())
    }
}

/// One independent stream per particle, ids `0..count` under `purpose`.
pub fn particle_streams(seed: u64, purpose: StreamPurpose, count: usize) -> Vec<RngStream> {
    (0..count as u64)
        .map(|j| RngStream::for_purpose(seed, purpose, j))
        .collect()
}

/// Brownian increment `B(t + dt) - B(t)` in `m` dimensions: i.i.d. `N(0, dt)`.
pub fn brownian_increments(stream: &mut RngStream, m: usize, dt: f64) -> Result<DVector<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(FilterError::invalid(format!(
            "Brownian increment needs dt > 0, got {dt}"
        )));
    }
    Ok(stream.normal_vector(m, dt.sqrt()))
}
