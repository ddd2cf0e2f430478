//! Shared numeric primitives: probabilities, scalar Gaussian densities and
//! a seeded, reproducible random stream.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const ONE: Probability = Probability(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(Error::Domain(format!("probability {value} outside [0, 1]")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

impl std::fmt::Display for Probability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Mean and variance of a scalar normal distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSpec {
    mean: f64,
    variance: f64,
}

impl GaussianSpec {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::Domain(format!("gaussian mean {mean} is not finite")));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::Domain(format!(
                "gaussian variance must be positive and finite, got {variance}"
            )));
        }
        Ok(GaussianSpec { mean, variance })
    }

    /// Zero-mean spec, the common case for additive noise.
    pub fn centered(variance: f64) -> Result<Self> {
        GaussianSpec::new(0.0, variance)
    }

    #[inline]
    pub fn mean(&self) -> f64 {
        self.mean
    }

    #[inline]
    pub fn variance(&self) -> f64 {
        self.variance
    }

    #[inline]
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Log-density without argument checks; used on the hot path.
    #[inline]
    pub(crate) fn ln_pdf_unchecked(&self, x: f64) -> f64 {
        let d = x - self.mean;
        -0.5 * (d * d / self.variance + (2.0 * PI * self.variance).ln())
    }

    /// Peak value of the density, attained at the mean.
    pub fn max_density(&self) -> f64 {
        (2.0 * PI * self.variance).sqrt().recip()
    }
}

/// Normal density `N(x; mean, variance)`.
pub fn gaussian_pdf(x: f64, spec: &GaussianSpec) -> Result<f64> {
    Ok(gaussian_ln_pdf(x, spec)?.exp())
}

/// Natural log of [`gaussian_pdf`]. Stays finite where the linear density underflows.
pub fn gaussian_ln_pdf(x: f64, spec: &GaussianSpec) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("density argument {x} is not finite")));
    }
    Ok(spec.ln_pdf_unchecked(x))
}

/// One draw from `N(mean, variance)`.
pub fn gaussian_sample(spec: &GaussianSpec, rng: &mut RngStream) -> f64 {
    spec.mean + spec.std_dev() * rng.standard_normal()
}

/// One Bernoulli draw; `true` with probability `p`.
pub fn bernoulli_sample(p: Probability, rng: &mut RngStream) -> bool {
    // `uniform` lies in [0, 1), so p = 0 never fires and p = 1 always does.
    rng.uniform() < p.value()
}

/// `ln(Σ exp(x_i))` with max subtraction. Returns `-inf` for an empty slice
/// or when every term is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// SplitMix64 finalizer, used to derive child seeds from a master seed.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic pseudo-random stream.
///
/// Backed by ChaCha8, which has a 64-bit stream selector; `derive(seed, id)`
/// gives streams that never overlap for distinct ids under one seed.
/// A stream can be moved between threads but is never shared.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream number `stream_id` under `seed`.
    pub fn derive(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream { inner }
    }

    /// Uniform draw in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}
