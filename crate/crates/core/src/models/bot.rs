//! Bearing-only tracking of a target moving along the X axis, observed from
//! a platform flying at constant mean height.
//!
//! State is `[position, velocity]`. The platform mean position at step `k`
//! is `(platform_speed · k · T, platform_height)`; the realized position adds
//! independent Gaussian jitter that the estimator does not see, so the
//! filter evaluates bearings from the mean position.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::SystemModel;
use crate::error::{Error, Result};
use crate::numeric::{gaussian_sample, GaussianSpec, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BotParams {
    /// Sampling time `T` in seconds.
    pub sampling_time: f64,
    /// Platform position jitter variances (m²).
    pub platform_var_x: f64,
    pub platform_var_y: f64,
    /// Mean platform speed along X (m/s) and fixed mean height (m).
    pub platform_speed: f64,
    pub platform_height: f64,
    /// Acceleration noise variance `r_q` (m²/s⁴).
    pub process_var: f64,
    /// Bearing noise variance in rad².
    pub meas_var: f64,
    /// True initial state `[m, m/s]`.
    pub initial_state: [f64; 2],
    /// Filter prior variances around `initial_state`.
    pub prior_var: [f64; 2],
    /// Use the transition matrix `[1 T; 0 T]` instead of constant velocity.
    pub velocity_scaled_by_t: bool,
}

impl Default for BotParams {
    fn default() -> Self {
        let sigma_v = 3f64.to_radians();
        BotParams {
            sampling_time: 0.2,
            platform_var_x: 1.0,
            platform_var_y: 1.0,
            platform_speed: 4.0,
            platform_height: 20.0,
            process_var: 0.01,
            meas_var: sigma_v * sigma_v,
            initial_state: [80.0, 1.0],
            prior_var: [25.0, 0.25],
            velocity_scaled_by_t: false,
        }
    }
}

impl BotParams {
    pub fn transition_matrix(&self) -> Matrix2<f64> {
        let t = self.sampling_time;
        let vv = if self.velocity_scaled_by_t { t } else { 1.0 };
        Matrix2::new(1.0, t, 0.0, vv)
    }

    pub fn noise_gain(&self) -> Vector2<f64> {
        let t = self.sampling_time;
        Vector2::new(t * t / 2.0, t)
    }

    pub fn mean_platform(&self, k: usize) -> (f64, f64) {
        (
            self.platform_speed * k as f64 * self.sampling_time,
            self.platform_height,
        )
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("sampling_time", self.sampling_time),
            ("platform_var_x", self.platform_var_x),
            ("platform_var_y", self.platform_var_y),
            ("process_var", self.process_var),
            ("meas_var", self.meas_var),
            ("prior_var[0]", self.prior_var[0]),
            ("prior_var[1]", self.prior_var[1]),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "bot.{name} must be positive, got {v}"
                )));
            }
        }
        if self.platform_height == 0.0 {
            return Err(Error::Config("bot.platform_height must be nonzero".into()));
        }
        Ok(())
    }
}

/// Maps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Bearing from the platform at `(x_tp, y_tp)` to the target at `(x1, 0)`,
/// as the full-quadrant arctangent of `y_tp / (x1 − x_tp)` in `(−π, π]`.
pub fn bot_measure(x1: f64, platform: (f64, f64)) -> Result<f64> {
    let (x_tp, y_tp) = platform;
    if !(x1.is_finite() && x_tp.is_finite() && y_tp.is_finite()) {
        return Err(Error::Domain("bearing geometry must be finite".into()));
    }
    let dx = x1 - x_tp;
    if dx == 0.0 && y_tp == 0.0 {
        return Err(Error::Domain(
            "target coincides with platform; bearing undefined".into(),
        ));
    }
    Ok(bearing(dx, y_tp))
}

#[inline]
fn bearing(dx: f64, dy: f64) -> f64 {
    let a = dy.atan2(dx);
    if a == -PI {
        PI
    } else {
        a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlatformTrack {
    pub mean: Vec<(f64, f64)>,
    pub noisy: Vec<(f64, f64)>,
}

impl PlatformTrack {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

fn noisy_platform(params: &BotParams, k: usize, rng: &mut RngStream) -> (f64, f64) {
    let (mx, my) = params.mean_platform(k);
    (
        mx + params.platform_var_x.sqrt() * rng.standard_normal(),
        my + params.platform_var_y.sqrt() * rng.standard_normal(),
    )
}

/// Platform positions for steps `0..n_steps`.
pub fn generate_platform_track(
    params: &BotParams,
    n_steps: usize,
    rng: &mut RngStream,
) -> Result<PlatformTrack> {
    if n_steps == 0 {
        return Err(Error::Contract(
            "platform track needs at least one step".into(),
        ));
    }
    let mean = (0..n_steps).map(|k| params.mean_platform(k)).collect();
    let noisy = (0..n_steps)
        .map(|k| noisy_platform(params, k, rng))
        .collect();
    Ok(PlatformTrack { mean, noisy })
}

#[derive(Debug, Clone)]
pub struct BotModel {
    params: BotParams,
    f: Matrix2<f64>,
    g: Vector2<f64>,
    meas: GaussianSpec,
    process_sd: f64,
    prior_sd: Vector2<f64>,
}

impl BotModel {
    pub fn new(params: BotParams) -> Result<Self> {
        params.validate()?;
        Ok(BotModel {
            params,
            f: params.transition_matrix(),
            g: params.noise_gain(),
            meas: GaussianSpec::centered(params.meas_var)?,
            process_sd: params.process_var.sqrt(),
            prior_sd: Vector2::new(params.prior_var[0].sqrt(), params.prior_var[1].sqrt()),
        })
    }

    pub fn params(&self) -> &BotParams {
        &self.params
    }

    /// `F x + G q` for a given scalar noise `q`.
    #[inline]
    pub fn transition(&self, x: &Vector2<f64>, q: f64) -> Vector2<f64> {
        self.f * x + self.g * q
    }
}

impl Default for BotModel {
    fn default() -> Self {
        BotModel::new(BotParams::default()).expect("default BOT parameters are valid")
    }
}

impl SystemModel for BotModel {
    type State = Vector2<f64>;

    fn propagate(&self, x: &Self::State, _k: usize, rng: &mut RngStream) -> Self::State {
        self.transition(x, self.process_sd * rng.standard_normal())
    }

    #[inline]
    fn measure_clean(&self, x: &Self::State, k: usize) -> f64 {
        let (x_tp, y_tp) = self.params.mean_platform(k);
        bearing(x[0] - x_tp, y_tp)
    }

    #[inline]
    fn residual(&self, y: f64, predicted: f64) -> f64 {
        wrap_angle(y - predicted)
    }

    #[inline]
    fn meas_noise_ln_pdf(&self, residual: f64, _k: usize) -> f64 {
        self.meas.ln_pdf_unchecked(residual)
    }

    fn meas_noise_peak(&self, _k: usize) -> f64 {
        self.meas.max_density()
    }

    fn meas_noise_sample(&self, _k: usize, rng: &mut RngStream) -> f64 {
        gaussian_sample(&self.meas, rng)
    }

    fn prior_sample(&self, rng: &mut RngStream) -> Self::State {
        let x0 = Vector2::from(self.params.initial_state);
        x0 + self
            .prior_sd
            .component_mul(&Vector2::new(rng.standard_normal(), rng.standard_normal()))
    }

    fn initial_truth(&self, _rng: &mut RngStream) -> Self::State {
        Vector2::from(self.params.initial_state)
    }

    fn sample_measurement(&self, x: &Self::State, k: usize, rng: &mut RngStream) -> f64 {
        let (x_tp, y_tp) = noisy_platform(&self.params, k, rng);
        wrap_angle(bearing(x[0] - x_tp, y_tp) + gaussian_sample(&self.meas, rng))
    }
}
