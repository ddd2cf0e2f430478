//! SIR particle filter for randomly delayed measurements.
//!
//! Each particle carries its last `N + 1` states so the likelihood of the
//! received measurement can mix every admissible delay:
//!
//! ```text
//! P(y_k | x_{k−N:k}) = Σ_{j=0..N} pʲ(1−p) P_v(y_k − h_{k−j}(x_{k−j}))
//!                    + pᴺ⁺¹ P(y_{k−1} | x_{k−1−N:k−1})
//! ```
//!
//! The last term is the particle's own likelihood from the previous step,
//! cached and carried through resampling together with the history.
//!
//! Likelihoods and weights are handled in log space. Resampling happens at
//! every step, after the estimate is taken.
//!
//! Larger `N` loses fewer measurements when `p` is high, but lengthens the
//! filter's memory and with it the Monte Carlo error for a fixed particle
//! count. Raise the particle count along with `N`.

use crate::channel::LatencyParams;
use crate::error::{Error, Result};
use crate::models::{StateVector, SystemModel};
use crate::numeric::RngStream;

/// Weighted particle cloud with per-particle state histories.
#[derive(Debug, Clone)]
pub struct ParticleSet<S> {
    params: LatencyParams,
    ln_branch: Vec<f64>,
    depth: usize,
    /// Row-major `ns × (N+1)`; column `j` holds `x_{k−j}`.
    histories: Vec<S>,
    weights: Vec<f64>,
    ln_prev_likelihood: Vec<f64>,
    form: LikelihoodForm,
    /// Row-major `ns × (N+1)`; entry `a < N` is the probability that the
    /// held packet is `a` steps old, entry `N` covers every older age.
    age: Vec<f64>,
    last_measurement: Option<f64>,
    step: usize,
}

/// How a particle scores the received measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodForm {
    /// The delay mixture with the drop branch weighted by the particle's
    /// cached likelihood from the previous step.
    Recursive,
    /// Marginalizes the age of the packet held by the receiver. A value equal
    /// to the previous one is scored as a repeat of the held packet, a new
    /// value as a delivery of some other packet.
    #[default]
    RepeatAware,
}

impl<S: StateVector> ParticleSet<S> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn params(&self) -> &LatencyParams {
        &self.params
    }

    /// Index of the last processed measurement; 0 right after initialization.
    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `[x_k, x_{k−1}, …, x_{k−N}]` of particle `i`.
    pub fn history(&self, i: usize) -> &[S] {
        &self.histories[i * self.depth..(i + 1) * self.depth]
    }

    pub fn current(&self, i: usize) -> &S {
        &self.histories[i * self.depth]
    }

    pub fn prev_likelihood(&self, i: usize) -> f64 {
        self.ln_prev_likelihood[i].exp()
    }

    pub fn ln_prev_likelihoods(&self) -> &[f64] {
        &self.ln_prev_likelihood
    }

    pub fn form(&self) -> LikelihoodForm {
        self.form
    }

    pub fn set_form(&mut self, form: LikelihoodForm) {
        self.form = form;
    }

    /// Builder form of [`set_form`](Self::set_form).
    pub fn with_form(mut self, form: LikelihoodForm) -> Self {
        self.form = form;
        self
    }

    /// Posterior over the age of the held packet for particle `i`.
    pub fn age_posterior(&self, i: usize) -> &[f64] {
        &self.age[i * self.depth..(i + 1) * self.depth]
    }

    fn history_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.histories[i * self.depth..(i + 1) * self.depth]
    }
}

/// Weighted mean of the current states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterEstimate<S> {
    pub mean: S,
    pub step: usize,
}

/// Everything one filter step reports besides the updated particles.
#[derive(Debug, Clone)]
pub struct StepReport<S> {
    pub estimate: FilterEstimate<S>,
    /// `ln Σᵢ w_{k−1}ⁱ P(y_k | x_{k−N:k}ⁱ)`, the one-step predictive log-likelihood.
    pub ln_likelihood: f64,
    /// Effective sample size of the updated weights, before resampling.
    pub ess: f64,
    /// All likelihoods were zero; the weights were reset to uniform.
    pub underflow: bool,
    /// Normalized weights before resampling.
    pub weights: Vec<f64>,
    pub ancestors: Vec<usize>,
}

/// Draws the particle cloud from the model prior. Older history slots hold
/// the same draw, the cached likelihood starts at 1 and weights are uniform.
pub fn init_filter<M: SystemModel>(
    model: &M,
    params: LatencyParams,
    ns: usize,
    rng: &mut RngStream,
) -> Result<ParticleSet<M::State>> {
    if ns == 0 {
        return Err(Error::Config("particle count must be at least 1".into()));
    }
    let depth = params.max_delay + 1;
    let mut histories = Vec::with_capacity(ns * depth);
    for _ in 0..ns {
        let x0 = model.prior_sample(rng);
        histories.extend(std::iter::repeat_n(x0, depth));
    }
    Ok(ParticleSet {
        ln_branch: params.ln_branch_weights(),
        params,
        depth,
        histories,
        weights: vec![1.0 / ns as f64; ns],
        ln_prev_likelihood: vec![0.0; ns],
        form: LikelihoodForm::default(),
        age: vec![0.0; ns * depth],
        last_measurement: None,
        step: 0,
    })
}

/// Log of the delayed likelihood for one particle history.
///
/// `ln_branch` is [`LatencyParams::ln_branch_weights`]. During start-up
/// (`k ≤ N`) a delay reaching before step 1 is evaluated against step 1,
/// and at `k = 1` the drop branch is too, mirroring the channel, which
/// always delivers `z_1` first.
pub fn ln_delayed_likelihood<M: SystemModel>(
    model: &M,
    history: &[M::State],
    y: f64,
    ln_prev: f64,
    ln_branch: &[f64],
    k: usize,
) -> f64 {
    let n = history.len() - 1;
    debug_assert_eq!(ln_branch.len(), n + 2);
    let oldest = k.max(1) - 1;

    let mut lse = OnlineLse::default();
    let mut push = |t: f64| lse.push(t);

    for (j, &lw) in ln_branch[..=n].iter().enumerate() {
        if lw == f64::NEG_INFINITY {
            continue;
        }
        let je = j.min(oldest);
        push(lw + model.ln_likelihood(y, &history[je], k.max(1) - je));
    }
    let ln_drop = ln_branch[n + 1];
    if ln_drop > f64::NEG_INFINITY {
        if oldest == 0 {
            push(ln_drop + model.ln_likelihood(y, &history[0], 1));
        } else {
            push(ln_drop + ln_prev);
        }
    }
    lse.value()
}

#[derive(Debug, Clone, Copy)]
struct OnlineLse {
    max: f64,
    acc: f64,
}

impl Default for OnlineLse {
    fn default() -> Self {
        OnlineLse {
            max: f64::NEG_INFINITY,
            acc: 0.0,
        }
    }
}

impl OnlineLse {
    #[inline]
    fn push(&mut self, t: f64) {
        if t == f64::NEG_INFINITY {
            return;
        }
        if t > self.max {
            self.acc = self.acc * (self.max - t).exp() + 1.0;
            self.max = t;
        } else {
            self.acc += (t - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.acc.ln()
        }
    }
}

/// Log-likelihood of `y_k` with the channel state marginalized, for one
/// particle, plus the updated age posterior of the held packet.
///
/// `age` is the posterior after step `k − 1` (length `N + 1`, last entry
/// lumping every age `≥ N`) and `age_out` receives the one after step `k`.
/// When `repeat` is set, `y_k` is the same packet as `y_{k−1}`: either a
/// drop, or the delivery whose delay points exactly at the held packet. The
/// result is then a probability rather than a density. Otherwise every
/// delay except the one pointing at the held packet is mixed as usual.
pub fn ln_repeat_aware_likelihood<M: SystemModel>(
    model: &M,
    history: &[M::State],
    y: f64,
    repeat: bool,
    age: &[f64],
    age_out: &mut [f64],
    ln_branch: &[f64],
    k: usize,
) -> f64 {
    let n = history.len() - 1;
    debug_assert_eq!(ln_branch.len(), n + 2);
    debug_assert_eq!(age.len(), n + 1);
    debug_assert_eq!(age_out.len(), n + 1);
    let oldest = k.max(1) - 1;
    age_out.fill(0.0);

    if oldest == 0 {
        age_out[0] = 1.0;
        return model.ln_likelihood(y, &history[0], 1);
    }

    if repeat {
        let p_drop = ln_branch[n + 1].exp();
        let mut total = 0.0;
        for (a, &r) in age.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            let mut mass = p_drop;
            if a < n {
                for (j, &lw) in ln_branch[..=n].iter().enumerate().skip(1) {
                    if j.min(oldest) == a + 1 {
                        mass += lw.exp();
                    }
                }
            }
            let c = r * mass;
            total += c;
            age_out[(a + 1).min(n)] += c;
        }
        if total > 0.0 {
            age_out.iter_mut().for_each(|v| *v /= total);
        } else {
            age_out.copy_from_slice(age);
        }
        return total.ln();
    }

    // age_out holds per-age log terms until the final normalization.
    age_out.fill(f64::NEG_INFINITY);
    let mut lse = OnlineLse::default();
    let mut cached: Option<(usize, f64)> = None;
    for (j, &lw) in ln_branch[..=n].iter().enumerate() {
        if lw == f64::NEG_INFINITY {
            continue;
        }
        let je = j.min(oldest);
        let held = if je == 0 { 0.0 } else { age[je - 1] };
        if held >= 1.0 {
            continue;
        }
        let ld = match cached {
            Some((c, v)) if c == je => v,
            _ => {
                let v = model.ln_likelihood(y, &history[je], k - je);
                cached = Some((je, v));
                v
            }
        };
        let t = lw + ld + (-held).ln_1p();
        lse.push(t);
        age_out[je] = log_add(age_out[je], t);
    }
    let total = lse.value();
    if total == f64::NEG_INFINITY {
        age_out.copy_from_slice(age);
        return total;
    }
    age_out.iter_mut().for_each(|v| *v = (*v - total).exp());
    total
}

#[inline]
fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// Linear-scale delayed likelihood `P(y_k | x_{k−N:k})`.
///
/// `history` holds `[x_k, …, x_{k−N}]` with `N = params.max_delay`, and
/// `prev_like` is this particle's value from step `k − 1`.
pub fn delayed_likelihood<M: SystemModel>(
    model: &M,
    history: &[M::State],
    y: f64,
    prev_like: f64,
    params: &LatencyParams,
    k: usize,
) -> Result<f64> {
    if history.len() != params.max_delay + 1 {
        return Err(Error::Contract(format!(
            "history has {} states, expected {}",
            history.len(),
            params.max_delay + 1
        )));
    }
    if !(prev_like >= 0.0 && prev_like.is_finite()) {
        return Err(Error::Contract(format!(
            "previous likelihood {prev_like} is not a finite nonnegative value"
        )));
    }
    if !y.is_finite() {
        return Err(Error::Domain(format!("measurement {y} is not finite")));
    }
    let ln = ln_delayed_likelihood(
        model,
        history,
        y,
        prev_like.ln(),
        &params.ln_branch_weights(),
        k,
    );
    let value = ln.exp();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numeric(format!(
            "delayed likelihood evaluated to {value}"
        )))
    }
}

/// Importance density for the new state.
///
/// Returns the draw and `ln P(x_k | x_{k−1}) − ln q(x_k | …)`, the factor the
/// weight update multiplies in besides the likelihood.
pub trait Proposal<M: SystemModel> {
    fn draw(
        &self,
        model: &M,
        history: &[M::State],
        y: f64,
        k: usize,
        rng: &mut RngStream,
    ) -> (M::State, f64);
}

/// The transition prior; its density ratio is identically 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct TransitionPrior;

impl<M: SystemModel> Proposal<M> for TransitionPrior {
    #[inline]
    fn draw(
        &self,
        model: &M,
        history: &[M::State],
        _y: f64,
        k: usize,
        rng: &mut RngStream,
    ) -> (M::State, f64) {
        (model.propagate(&history[0], k, rng), 0.0)
    }
}

/// One SIR step with the transition prior as proposal.
pub fn filter_step<M: SystemModel>(
    ps: &mut ParticleSet<M::State>,
    y: f64,
    model: &M,
    k: usize,
    rng: &mut RngStream,
) -> Result<StepReport<M::State>> {
    filter_step_with(ps, y, model, k, rng, &TransitionPrior)
}

pub fn filter_step_with<M: SystemModel, P: Proposal<M>>(
    ps: &mut ParticleSet<M::State>,
    y: f64,
    model: &M,
    k: usize,
    rng: &mut RngStream,
    proposal: &P,
) -> Result<StepReport<M::State>> {
    if !y.is_finite() {
        return Err(Error::Domain(format!(
            "measurement {y} at step {k} is not finite"
        )));
    }
    let ns = ps.len();
    let repeat = ps.last_measurement.map(f64::to_bits) == Some(y.to_bits());
    let depth = ps.depth;
    let aware = ps.form == LikelihoodForm::RepeatAware;
    let mut age_new = if aware {
        vec![0.0; ps.age.len()]
    } else {
        Vec::new()
    };

    let mut ln_like = vec![0.0; ns];
    let mut ln_w = vec![0.0; ns];
    for i in 0..ns {
        let (x_new, ln_ratio) = proposal.draw(model, ps.history(i), y, k, rng);
        let row = ps.history_mut(i);
        row.rotate_right(1);
        row[0] = x_new;
        let l = if aware {
            ln_repeat_aware_likelihood(
                model,
                ps.history(i),
                y,
                repeat,
                &ps.age[i * depth..(i + 1) * depth],
                &mut age_new[i * depth..(i + 1) * depth],
                &ps.ln_branch,
                k,
            )
        } else {
            ln_delayed_likelihood(
                model,
                ps.history(i),
                y,
                ps.ln_prev_likelihood[i],
                &ps.ln_branch,
                k,
            )
        };
        if l.is_nan() {
            return Err(Error::Numeric(format!(
                "likelihood of particle {i} is NaN at step {k}"
            )));
        }
        ln_like[i] = l;
        ln_w[i] = ps.weights[i].ln() + l + ln_ratio;
    }

    let max = ln_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (ln_likelihood, underflow) = if max == f64::NEG_INFINITY {
        ps.weights.fill(1.0 / ns as f64);
        (f64::NEG_INFINITY, true)
    } else if max.is_finite() {
        let mut sum = 0.0;
        for (w, lw) in ps.weights.iter_mut().zip(&ln_w) {
            *w = (lw - max).exp();
            sum += *w;
        }
        for w in ps.weights.iter_mut() {
            *w /= sum;
        }
        (max + sum.ln(), false)
    } else {
        return Err(Error::Numeric(format!("log-weight overflow at step {k}")));
    };

    let est = estimate(ps);
    let ess = ps.weights.iter().map(|w| w * w).sum::<f64>().recip();
    let ancestors = systematic_resample(&ps.weights, rng)?;

    let mut histories = Vec::with_capacity(ps.histories.len());
    for &a in &ancestors {
        histories.extend_from_slice(&ps.histories[a * depth..(a + 1) * depth]);
    }
    ps.histories = histories;
    ps.ln_prev_likelihood = ancestors.iter().map(|&a| ln_like[a]).collect();
    if aware {
        let mut age = Vec::with_capacity(age_new.len());
        for &a in &ancestors {
            age.extend_from_slice(&age_new[a * depth..(a + 1) * depth]);
        }
        ps.age = age;
    }
    let weights = std::mem::replace(&mut ps.weights, vec![1.0 / ns as f64; ns]);
    ps.last_measurement = Some(y);
    ps.step = k;

    Ok(StepReport {
        estimate: FilterEstimate {
            mean: est.mean,
            step: k,
        },
        ln_likelihood,
        ess,
        underflow,
        weights,
        ancestors,
    })
}

/// Systematic resampling: one uniform offset, `ns` evenly spaced positions.
pub fn systematic_resample(weights: &[f64], rng: &mut RngStream) -> Result<Vec<usize>> {
    let ns = weights.len();
    if ns == 0 {
        return Err(Error::Contract(
            "cannot resample an empty weight vector".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if !((total - 1.0).abs() <= 1e-9) || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::Contract(format!(
            "weights must be nonnegative and sum to 1, sum is {total}"
        )));
    }
    let step = 1.0 / ns as f64;
    let offset = rng.uniform() * step;
    let mut out = Vec::with_capacity(ns);
    let mut cumulative = weights[0];
    let mut i = 0;
    for m in 0..ns {
        let u = offset + m as f64 * step;
        while cumulative < u && i + 1 < ns {
            i += 1;
            cumulative += weights[i];
        }
        out.push(i);
    }
    Ok(out)
}

/// Weighted mean of the current particle states.
pub fn estimate<S: StateVector>(ps: &ParticleSet<S>) -> FilterEstimate<S> {
    let mut mean = S::zero();
    for (i, w) in ps.weights.iter().enumerate() {
        mean.add_scaled(ps.current(i), *w);
    }
    FilterEstimate {
        mean,
        step: ps.step,
    }
}

/// Writes the per-step diagnostic CSV `step,component,estimate,ess,underflow`.
pub fn write_diagnostics<S: StateVector, W: std::io::Write>(
    out: W,
    reports: &[StepReport<S>],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "component", "estimate", "ess", "underflow"])?;
    for r in reports {
        for c in 0..S::DIM {
            w.write_record([
                r.estimate.step.to_string(),
                c.to_string(),
                r.estimate.mean.component(c).to_string(),
                r.ess.to_string(),
                (r.underflow as u8).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
