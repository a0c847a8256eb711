//! Seeded randomness and the Laplace primitive.
//!
//! One `StreamRng` per logical stream; child streams derive from the same
//! base seed plus a stream index, so parallel trials reproduce regardless of
//! scheduling. Laplace sampling goes through the inverse CDF on a single
//! uniform draw, so the density the auditor evaluates is exactly the density
//! sampled from.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("laplace scale must be positive, got {0}")]
    NonPositiveScale(f64),
}

/// Deterministic counter-based generator keyed by (seed, stream index).
#[derive(Clone, Debug)]
pub struct StreamRng {
    seed: u64,
    inner: ChaCha12Rng,
}

impl StreamRng {
    pub fn new(seed: u64) -> Self {
        StreamRng {
            seed,
            inner: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream with the same base seed. Stream 0 is the stream
    /// `new` starts on.
    pub fn substream(&self, index: u64) -> Self {
        let mut inner = ChaCha12Rng::seed_from_u64(self.seed);
        inner.set_stream(index);
        StreamRng {
            seed: self.seed,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            if u > 0.0 {
                return u;
            }
        }
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

/// Scale parameter b of the Laplace distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaplaceScale(f64);

impl LaplaceScale {
    pub fn new(lambda: f64) -> Result<Self, NoiseError> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(NoiseError::NonPositiveScale(lambda));
        }
        Ok(LaplaceScale(lambda))
    }

    pub fn lambda(self) -> f64 {
        self.0
    }
}

/// Laplace(0, lambda) sample by inverse CDF on one uniform draw.
pub fn laplace_sample(rng: &mut StreamRng, scale: LaplaceScale) -> f64 {
    let u = rng.uniform_open();
    let v = u - 0.5;
    -scale.lambda() * v.signum() * (1.0 - 2.0 * v.abs()).ln()
}

/// log p(x; lambda) = -ln(2 lambda) - |x| / lambda.
pub fn laplace_log_density(x: f64, scale: LaplaceScale) -> f64 {
    -(2.0 * scale.lambda()).ln() - x.abs() / scale.lambda()
}

/// Laplace(0, lambda) CDF.
pub fn laplace_cdf(x: f64, scale: LaplaceScale) -> f64 {
    let l = scale.lambda();
    if x < 0.0 {
        0.5 * (x / l).exp()
    } else {
        1.0 - 0.5 * (-x / l).exp()
    }
}
