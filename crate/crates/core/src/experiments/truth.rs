use crate::channel::{DelayChannel, DelayOutcome, LatencyParams};
use crate::models::SystemModel;
use crate::numeric::{mix_seed, RngStream};

/// One simulated trajectory: true states, true measurements and what the
/// receiver got. Index `i` holds step `k = i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth<S> {
    pub initial: S,
    pub states: Vec<S>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub outcomes: Vec<DelayOutcome>,
}

impl<S> Truth<S> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Simulates the state-space model for `n_steps` and sends every true
/// measurement through a delay channel with `latency`.
pub fn generate_truth<M: SystemModel>(
    model: &M,
    latency: LatencyParams,
    n_steps: usize,
    seed: u64,
) -> Truth<M::State> {
    let mut sys_rng = RngStream::derive(mix_seed(seed, 0x7A), 1);
    let mut channel = DelayChannel::new(latency, RngStream::derive(mix_seed(seed, 0x7A), 2));

    let initial = model.initial_truth(&mut sys_rng);
    let mut x = initial;
    let mut out = Truth {
        initial,
        states: Vec::with_capacity(n_steps),
        z: Vec::with_capacity(n_steps),
        y: Vec::with_capacity(n_steps),
        outcomes: Vec::with_capacity(n_steps),
    };
    for k in 1..=n_steps {
        x = model.propagate(&x, k, &mut sys_rng);
        let z = model.sample_measurement(&x, k, &mut sys_rng);
        let (y, outcome) = channel.step(z);
        out.states.push(x);
        out.z.push(z);
        out.y.push(y);
        out.outcomes.push(outcome);
    }
    out
}
