//! Univariate non-stationary growth model.
//!
//! ```text
//! x_k = 0.5 x_{k−1} + 25 x_{k−1} / (1 + x_{k−1}²) + 8 cos(1.2 k) + q_{k−1}
//! z_k = x_k² / 20 + v_k
//! ```

use nalgebra::Vector1;
use serde::{Deserialize, Serialize};

use super::SystemModel;
use crate::error::Result;
use crate::numeric::{gaussian_sample, GaussianSpec, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrowthParams {
    pub process_var: f64,
    pub meas_var: f64,
    pub prior_mean: f64,
    pub prior_var: f64,
}

impl Default for GrowthParams {
    fn default() -> Self {
        GrowthParams {
            process_var: 10.0,
            meas_var: 1.0,
            prior_mean: 0.0,
            prior_var: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GrowthModel {
    params: GrowthParams,
    process: GaussianSpec,
    meas: GaussianSpec,
    prior: GaussianSpec,
}

impl GrowthModel {
    pub fn new(params: GrowthParams) -> Result<Self> {
        Ok(GrowthModel {
            params,
            process: GaussianSpec::centered(params.process_var)?,
            meas: GaussianSpec::centered(params.meas_var)?,
            prior: GaussianSpec::new(params.prior_mean, params.prior_var)?,
        })
    }

    pub fn params(&self) -> &GrowthParams {
        &self.params
    }

    /// Deterministic part of the transition into step `k`.
    #[inline]
    pub fn drift(x: f64, k: usize) -> f64 {
        0.5 * x + 25.0 * x / (1.0 + x * x) + 8.0 * (1.2 * k as f64).cos()
    }
}

impl Default for GrowthModel {
    fn default() -> Self {
        GrowthModel::new(GrowthParams::default()).expect("default growth parameters are valid")
    }
}

#[inline]
pub fn growth_measure(x: f64) -> f64 {
    x * x / 20.0
}

impl SystemModel for GrowthModel {
    type State = Vector1<f64>;

    fn propagate(&self, x: &Self::State, k: usize, rng: &mut RngStream) -> Self::State {
        Vector1::new(Self::drift(x[0], k) + gaussian_sample(&self.process, rng))
    }

    #[inline]
    fn measure_clean(&self, x: &Self::State, _k: usize) -> f64 {
        growth_measure(x[0])
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
        Vector1::new(gaussian_sample(&self.prior, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn drift_examples() {
        for k in 0..20 {
            assert_eq!(GrowthModel::drift(0.0, k), 8.0 * (1.2 * k as f64).cos());
        }
        assert_relative_eq!(GrowthModel::drift(1.0, 0), 21.0, epsilon = 1e-12);
        for (x, k) in [(0.3, 1), (2.0, 7), (-15.0, 33)] {
            let c = 8.0 * (1.2 * k as f64).cos();
            assert_relative_eq!(
                GrowthModel::drift(-x, k) - c,
                -(GrowthModel::drift(x, k) - c),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn measurement_examples() {
        assert_eq!(growth_measure(0.0), 0.0);
        assert_eq!(growth_measure(20.0), 20.0);
        assert_eq!(growth_measure(-7.3), growth_measure(7.3));
    }

    #[test]
    fn density_at_clean_measurement_is_the_mode() {
        let m = GrowthModel::default();
        let x = Vector1::new(4.2);
        let y = m.measure_clean(&x, 3);
        assert_relative_eq!(
            m.ln_likelihood(y, &x, 3).exp(),
            (2.0 * std::f64::consts::PI).sqrt().recip(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn noise_density_integrates_to_one() {
        let m = GrowthModel::default();
        let (a, b, n) = (-10.0, 10.0, 20_000);
        let h = (b - a) / n as f64;
        let mut acc = m.meas_noise_pdf(a, 1) + m.meas_noise_pdf(b, 1);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * m.meas_noise_pdf(a + i as f64 * h, 1);
        }
        assert!((acc * h / 3.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn process_noise_moments() {
        let m = GrowthModel::default();
        let mut rng = RngStream::new(4);
        let n = 200_000;
        let d: Vec<f64> = (0..n)
            .map(|_| m.propagate(&Vector1::new(0.0), 0, &mut rng)[0] - 8.0)
            .collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.05);
        assert!((var / 10.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn rejects_bad_params() {
        let bad = GrowthParams {
            meas_var: 0.0,
            ..GrowthParams::default()
        };
        assert!(GrowthModel::new(bad).is_err());
    }
}
