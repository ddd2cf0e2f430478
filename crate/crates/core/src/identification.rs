//! Maximum-likelihood identification of the latency probability.
//!
//! A bank of filters, one per grid candidate `p`, consumes the same
//! measurements. Each accumulates `L_p = Σ_{k≥2} ln Σᵢ w_{p,k}ⁱ`, the log of
//! its one-step predictive likelihood; `y_1` only conditions the filters.
//! Offline identification takes the argmax after `m` measurements, online
//! identification takes it after every step and keeps a running average.
//!
//! Ties go to the lowest candidate.

use rayon::prelude::*;

use crate::channel::LatencyParams;
use crate::error::{Error, Result};
use crate::filter::{filter_step, init_filter, LikelihoodForm, ParticleSet};
use crate::models::SystemModel;
use crate::numeric::{mix_seed, Probability, RngStream};

/// Ordered candidate latency probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    step: Option<f64>,
    candidates: Vec<Probability>,
}

impl GridSpec {
    /// `{0, sl, 2·sl, …}` up to and including 1 when `1/sl` is whole.
    pub fn uniform(sl: f64) -> Result<Self> {
        if !(sl > 0.0 && sl <= 1.0) {
            return Err(Error::Config(format!(
                "grid step must lie in (0, 1], got {sl}"
            )));
        }
        let count = (1.0 / sl + 1e-9).floor() as usize;
        let candidates = (0..=count)
            .map(|i| {
                let p = ((i as f64 * sl) * 1e12).round() / 1e12;
                Probability::new(p.min(1.0))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GridSpec {
            step: Some(sl),
            candidates,
        })
    }

    pub fn from_candidates(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("candidate grid is empty".into()));
        }
        let mut candidates = values
            .iter()
            .map(|v| Probability::new(*v))
            .collect::<Result<Vec<_>>>()?;
        candidates.sort_by(|a, b| a.value().total_cmp(&b.value()));
        candidates.dedup();
        Ok(GridSpec {
            step: None,
            candidates,
        })
    }

    pub fn step(&self) -> Option<f64> {
        self.step
    }

    pub fn candidates(&self) -> &[Probability] {
        &self.candidates
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IdentificationOptions {
    /// Give every candidate the same random stream instead of one each.
    pub common_random_numbers: bool,
    pub form: LikelihoodForm,
}

/// Random stream of grid candidate `idx`; shared by all candidates under
/// common random numbers.
pub fn candidate_stream(seed: u64, idx: usize, options: IdentificationOptions) -> RngStream {
    let stream = if options.common_random_numbers {
        0
    } else {
        idx as u64
    };
    RngStream::derive(mix_seed(seed, 0x1D), stream)
}

/// One candidate's filter and cumulative log-likelihood.
#[derive(Debug, Clone)]
pub struct Candidate<S> {
    pub p: Probability,
    pub filter: ParticleSet<S>,
    pub log_likelihood: f64,
    rng: RngStream,
}

/// Filters for every grid candidate, fed in lockstep.
#[derive(Debug, Clone)]
pub struct CandidateFilterState<S> {
    candidates: Vec<Candidate<S>>,
    steps: usize,
}

impl<S: crate::models::StateVector> CandidateFilterState<S> {
    pub fn new<M: SystemModel<State = S>>(
        model: &M,
        grid: &GridSpec,
        max_delay: usize,
        ns: usize,
        seed: u64,
        options: IdentificationOptions,
    ) -> Result<Self> {
        let candidates = grid
            .candidates()
            .iter()
            .enumerate()
            .map(|(idx, &p)| {
                let mut rng = candidate_stream(seed, idx, options);
                let filter = init_filter(model, LatencyParams { p, max_delay }, ns, &mut rng)?
                    .with_form(options.form);
                Ok(Candidate {
                    p,
                    filter,
                    log_likelihood: 0.0,
                    rng,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CandidateFilterState {
            candidates,
            steps: 0,
        })
    }

    pub fn candidates(&self) -> &[Candidate<S>] {
        &self.candidates
    }

    /// Number of measurements consumed so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `(p, L_p)` for every candidate.
    pub fn curve(&self) -> Vec<(Probability, f64)> {
        self.candidates
            .iter()
            .map(|c| (c.p, c.log_likelihood))
            .collect()
    }

    /// First candidate attaining the largest `L_p`, or `None` if all are `-inf`.
    pub fn argmax(&self) -> Option<(Probability, f64)> {
        let mut best: Option<(Probability, f64)> = None;
        for c in &self.candidates {
            if c.log_likelihood == f64::NEG_INFINITY {
                continue;
            }
            if best.is_none_or(|(_, l)| c.log_likelihood > l) {
                best = Some((c.p, c.log_likelihood));
            }
        }
        best
    }
}

/// Advances every candidate filter with `y_k` and, from `k = 2` on, adds the
/// step's log predictive likelihood to each `L_p`. A candidate whose
/// likelihood vanishes is pinned at `-inf` and no longer advanced.
pub fn ll_step<M: SystemModel>(
    state: &mut CandidateFilterState<M::State>,
    y: f64,
    model: &M,
    k: usize,
) -> Result<()> {
    let accumulate = k >= 2;
    state
        .candidates
        .par_iter_mut()
        .try_for_each(|c| -> Result<()> {
            if c.log_likelihood == f64::NEG_INFINITY {
                return Ok(());
            }
            let report = filter_step(&mut c.filter, y, model, k, &mut c.rng)?;
            if accumulate {
                c.log_likelihood += report.ln_likelihood;
            }
            Ok(())
        })?;
    state.steps += 1;
    Ok(())
}

/// Result of a grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationResult {
    pub p_hat: Probability,
    pub ln_likelihood_max: f64,
    pub curve: Vec<(Probability, f64)>,
}

/// Offline grid search over `y_1 … y_m`.
pub fn offline_identify<M: SystemModel>(
    measurements: &[f64],
    grid: &GridSpec,
    model: &M,
    max_delay: usize,
    ns: usize,
    seed: u64,
    options: IdentificationOptions,
) -> Result<IdentificationResult> {
    if measurements.len() < 2 {
        return Err(Error::Contract(
            "offline identification needs at least two measurements".into(),
        ));
    }
    let mut state = CandidateFilterState::new(model, grid, max_delay, ns, seed, options)?;
    for (idx, &y) in measurements.iter().enumerate() {
        ll_step(&mut state, y, model, idx + 1)?;
    }
    let (p_hat, ln_likelihood_max) = state.argmax().ok_or(Error::IdentificationFailed)?;
    Ok(IdentificationResult {
        p_hat,
        ln_likelihood_max,
        curve: state.curve(),
    })
}

/// Candidate bank plus the per-step argmax trace and its running average.
#[derive(Debug, Clone)]
pub struct OnlineIdentState<S> {
    pub bank: CandidateFilterState<S>,
    estimates: Vec<Probability>,
    sum: f64,
}

impl<S: crate::models::StateVector> OnlineIdentState<S> {
    pub fn new<M: SystemModel<State = S>>(
        model: &M,
        grid: &GridSpec,
        max_delay: usize,
        ns: usize,
        seed: u64,
        options: IdentificationOptions,
    ) -> Result<Self> {
        Ok(OnlineIdentState {
            bank: CandidateFilterState::new(model, grid, max_delay, ns, seed, options)?,
            estimates: Vec::new(),
            sum: 0.0,
        })
    }

    /// Per-step argmax values `p̂_1, …, p̂_k`.
    pub fn estimates(&self) -> &[Probability] {
        &self.estimates
    }

    pub fn running_average(&self) -> Option<f64> {
        if self.estimates.is_empty() {
            None
        } else {
            Some(self.sum / self.estimates.len() as f64)
        }
    }
}

/// Consumes `y_k` and returns this step's argmax `p̂_k`.
pub fn online_identify_step<M: SystemModel>(
    state: &mut OnlineIdentState<M::State>,
    y: f64,
    model: &M,
    k: usize,
) -> Result<Probability> {
    ll_step(&mut state.bank, y, model, k)?;
    let (p_hat, _) = state.bank.argmax().ok_or(Error::IdentificationFailed)?;
    state.estimates.push(p_hat);
    state.sum += p_hat.value();
    Ok(p_hat)
}
