//! System models `x_k = f(x_{k−1}, k−1) + q_{k−1}`, `z_k = h_k(x_k) + v_k`.
//!
//! Measurements are scalar in every model shipped here.

use std::fmt::Debug;

use nalgebra::SVector;

use crate::numeric::RngStream;

mod bot;
mod growth;

pub use bot::{
    bot_measure, generate_platform_track, wrap_angle, BotModel, BotParams, PlatformTrack,
};
pub use growth::{growth_measure, GrowthModel, GrowthParams};

/// Fixed-size state vector.
pub trait StateVector: Copy + Debug + PartialEq + Send + Sync + 'static {
    const DIM: usize;

    fn zero() -> Self;
    fn component(&self, i: usize) -> f64;
    /// `self += weight * other`
    fn add_scaled(&mut self, other: &Self, weight: f64);
}

impl<const D: usize> StateVector for SVector<f64, D> {
    const DIM: usize = D;

    fn zero() -> Self {
        SVector::zeros()
    }

    #[inline]
    fn component(&self, i: usize) -> f64 {
        self[i]
    }

    #[inline]
    fn add_scaled(&mut self, other: &Self, weight: f64) {
        self.axpy(weight, other, 1.0);
    }
}

/// Nonlinear state-space model consumed by the filters and the truth generator.
///
/// Step indices start at 1 for the first measurement; the prior describes `x_0`.
pub trait SystemModel: Send + Sync {
    type State: StateVector;

    fn state_dim(&self) -> usize {
        Self::State::DIM
    }

    fn meas_dim(&self) -> usize {
        1
    }

    /// Draws `x_k` given `x_{k−1}`. `k` is the index of the state being produced.
    fn propagate(&self, x: &Self::State, k: usize, rng: &mut RngStream) -> Self::State;

    /// Noiseless measurement `h_k(x)` as seen by the estimator.
    fn measure_clean(&self, x: &Self::State, k: usize) -> f64;

    /// `y − h`; models with angular measurements wrap it.
    fn residual(&self, y: f64, predicted: f64) -> f64 {
        y - predicted
    }

    /// Log-density of the measurement noise `v_k` at `residual`.
    fn meas_noise_ln_pdf(&self, residual: f64, k: usize) -> f64;

    fn meas_noise_pdf(&self, residual: f64, k: usize) -> f64 {
        self.meas_noise_ln_pdf(residual, k).exp()
    }

    /// Upper bound of the measurement-noise density at step `k`.
    fn meas_noise_peak(&self, k: usize) -> f64;

    fn meas_noise_sample(&self, k: usize, rng: &mut RngStream) -> f64;

    /// Draws a particle for `x_0`.
    fn prior_sample(&self, rng: &mut RngStream) -> Self::State;

    /// Draws the true initial state used by simulations.
    fn initial_truth(&self, rng: &mut RngStream) -> Self::State {
        self.prior_sample(rng)
    }

    /// Draws a true measurement `z_k`, including any randomness the
    /// estimator does not model.
    fn sample_measurement(&self, x: &Self::State, k: usize, rng: &mut RngStream) -> f64 {
        self.measure_clean(x, k) + self.meas_noise_sample(k, rng)
    }

    /// `ln P_{v_k}(y − h_k(x))`.
    #[inline]
    fn ln_likelihood(&self, y: f64, x: &Self::State, k: usize) -> f64 {
        self.meas_noise_ln_pdf(self.residual(y, self.measure_clean(x, k)), k)
    }
}
