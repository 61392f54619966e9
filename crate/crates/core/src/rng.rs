//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 generator whose 256-bit key is expanded from a
//! 64-bit base seed with SplitMix64 (`SeedableRng::seed_from_u64`) and whose
//! 64-bit ChaCha stream id is the stream index. Two streams with the same
//! `(base_seed, stream_index)` produce identical draws; different stream ids
//! select non-overlapping keystreams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ALGORITHM: &str = "chacha8/splitmix64-key/stream-id";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub base_seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(base_seed: u64, stream_index: u64) -> Self {
        Self {
            base_seed,
            stream_index,
        }
    }

    /// Stream for trial `t` of cell `cell`. Pure function of its inputs, so the
    /// schedule that runs the trial cannot change its draws.
    pub fn for_trial(base_seed: u64, cell: u32, trial: u32) -> Self {
        Self::new(base_seed, (u64::from(cell) << 32) | u64::from(trial))
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream(self.stream_index);
        rng
    }

    /// Derived child stream; keyed on a mixed seed so children of different
    /// parents do not collide.
    pub fn child(&self, tag: u64) -> Self {
        let mixed = splitmix64(self.base_seed ^ splitmix64(self.stream_index.wrapping_add(tag)));
        Self::new(mixed, tag)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `n` independent standard normal draws from `rng`.
pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Usage("gaussian_vector needs n >= 1".into()));
    }
    Ok((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
}

/// Uniformly distributed direction on the unit sphere.
pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<Vec<f64>> {
    loop {
        let g = gaussian_vector(rng, n)?;
        if let Some(u) = crate::linalg::normalized(&g) {
            return Ok(u);
        }
    }
}
