//! Bernoulli delay/drop channel between sensor and estimator.
//!
//! At every step the channel draws `N + 1` i.i.d. Bernoulli(p) variables
//! `β¹ … βᴺ⁺¹`. The measurement is delayed by `j` steps when the first `j`
//! draws are 1 and draw `j + 1` is 0. If all `N + 1` draws are 1 nothing new
//! arrives and the receiver keeps its previous value. The same packet can be
//! delivered more than once.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{bernoulli_sample, Probability, RngStream};

/// Latency probability `p` and maximum admissible delay `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyParams {
    pub p: Probability,
    pub max_delay: usize,
}

impl LatencyParams {
    pub fn new(p: f64, max_delay: usize) -> Result<Self> {
        Ok(LatencyParams {
            p: Probability::new(p)?,
            max_delay,
        })
    }

    /// Parameters under which the channel is the identity.
    pub fn undelayed() -> Self {
        LatencyParams {
            p: Probability::ZERO,
            max_delay: 0,
        }
    }

    /// Natural logs of the delay weights `pʲ(1−p)`, `j = 0..=N`, followed by
    /// the drop weight `pᴺ⁺¹`. Zero weights map to `-inf`.
    pub fn ln_branch_weights(&self) -> Vec<f64> {
        let pmf = delay_pmf(self);
        pmf.delivered
            .iter()
            .chain(std::iter::once(&pmf.dropped))
            .map(|w| w.ln())
            .collect()
    }
}

/// What the channel did at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DelayOutcome {
    /// A measurement `j` steps old was delivered.
    Delivered(usize),
    /// Nothing arrived; the previous delivery is repeated.
    Dropped,
}

impl DelayOutcome {
    pub fn kind(&self) -> &'static str {
        match self {
            DelayOutcome::Delivered(_) => "delivered",
            DelayOutcome::Dropped => "dropped",
        }
    }

    pub fn delay(&self) -> Option<usize> {
        match self {
            DelayOutcome::Delivered(j) => Some(*j),
            DelayOutcome::Dropped => None,
        }
    }
}

/// Closed-form outcome distribution of one channel step.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayPmf {
    /// `delivered[j] = pʲ(1−p)`.
    pub delivered: Vec<f64>,
    /// `pᴺ⁺¹`.
    pub dropped: f64,
}

impl DelayPmf {
    pub fn probability(&self, outcome: DelayOutcome) -> f64 {
        match outcome {
            DelayOutcome::Delivered(j) => self.delivered.get(j).copied().unwrap_or(0.0),
            DelayOutcome::Dropped => self.dropped,
        }
    }
}

pub fn delay_pmf(params: &LatencyParams) -> DelayPmf {
    let p = params.p.value();
    let delivered = (0..=params.max_delay)
        .map(|j| p.powi(j as i32) * (1.0 - p))
        .collect();
    DelayPmf {
        delivered,
        dropped: p.powi(params.max_delay as i32 + 1),
    }
}

/// Maps a realized `β¹ … βᴺ⁺¹` chain to the outcome it encodes.
///
/// `αʲ = β⁰ β¹ ⋯ βʲ (1 − βʲ⁺¹)` with `β⁰ ≡ 1`, so the delay is the length of
/// the leading run of ones.
pub fn outcome_from_betas(betas: &[bool]) -> DelayOutcome {
    match betas.iter().position(|b| !b) {
        Some(j) => DelayOutcome::Delivered(j),
        None => DelayOutcome::Dropped,
    }
}

/// Draws one outcome from a fresh Bernoulli chain.
pub fn draw_outcome(params: &LatencyParams, rng: &mut RngStream) -> DelayOutcome {
    let betas: Vec<bool> = (0..=params.max_delay)
        .map(|_| bernoulli_sample(params.p, rng))
        .collect();
    outcome_from_betas(&betas)
}

/// Relative frequency of each outcome over independent single-step draws.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayHistogram {
    pub delivered: Vec<f64>,
    pub dropped: f64,
    pub trials: usize,
}

pub fn empirical_delay_histogram(
    params: &LatencyParams,
    trials: usize,
    rng: &mut RngStream,
) -> Result<DelayHistogram> {
    if trials == 0 {
        return Err(Error::Contract("histogram needs at least one trial".into()));
    }
    let mut delivered = vec![0usize; params.max_delay + 1];
    let mut dropped = 0usize;
    for _ in 0..trials {
        match draw_outcome(params, rng) {
            DelayOutcome::Delivered(j) => delivered[j] += 1,
            DelayOutcome::Dropped => dropped += 1,
        }
    }
    let n = trials as f64;
    Ok(DelayHistogram {
        delivered: delivered.into_iter().map(|c| c as f64 / n).collect(),
        dropped: dropped as f64 / n,
        trials,
    })
}

/// Stateful channel: buffers the last `N + 1` true measurements and the last
/// delivery.
///
/// Before `N + 1` measurements exist, a delay reaching past the first
/// measurement delivers the oldest one available, and a drop at the very
/// first step delivers `z₁`. The reported outcome is always the drawn one.
#[derive(Debug, Clone)]
pub struct DelayChannel<T> {
    params: LatencyParams,
    buffer: VecDeque<T>,
    last_delivery: Option<T>,
    rng: RngStream,
    step_count: usize,
}

impl<T: Clone> DelayChannel<T> {
    pub fn new(params: LatencyParams, rng: RngStream) -> Self {
        DelayChannel {
            params,
            buffer: VecDeque::with_capacity(params.max_delay + 1),
            last_delivery: None,
            rng,
            step_count: 0,
        }
    }

    pub fn params(&self) -> &LatencyParams {
        &self.params
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    /// Number of true measurements currently buffered.
    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    /// Feeds the true measurement `z_k` and returns what the receiver holds.
    pub fn step(&mut self, z: T) -> (T, DelayOutcome) {
        let outcome = draw_outcome(&self.params, &mut self.rng);
        let y = self.step_with_outcome(z, outcome);
        (y, outcome)
    }

    /// Like [`step`](Self::step) with the outcome supplied by the caller.
    pub fn step_with_outcome(&mut self, z: T, outcome: DelayOutcome) -> T {
        if self.buffer.len() == self.params.max_delay + 1 {
            self.buffer.pop_front();
        }
        self.buffer.push_back(z);
        self.step_count += 1;

        let newest = self.buffer.len() - 1;
        let y = match (outcome, &self.last_delivery) {
            (DelayOutcome::Delivered(j), _) => self.buffer[newest - j.min(newest)].clone(),
            (DelayOutcome::Dropped, Some(prev)) => prev.clone(),
            (DelayOutcome::Dropped, None) => self.buffer[0].clone(),
        };
        self.last_delivery = Some(y.clone());
        y
    }
}

/// Writes `step,outcome_kind,delay_j` rows. `delay_j` is empty for drops.
pub fn write_outcome_trace<W: Write>(
    out: W,
    outcomes: impl IntoIterator<Item = (usize, DelayOutcome)>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "outcome_kind", "delay_j"])?;
    for (step, outcome) in outcomes {
        let delay = outcome.delay().map(|j| j.to_string()).unwrap_or_default();
        w.write_record([step.to_string(), outcome.kind().to_string(), delay])?;
    }
    w.flush()?;
    Ok(())
}
