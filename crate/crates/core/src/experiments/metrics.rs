use crate::error::{Error, Result};
use crate::models::StateVector;

/// Per-step RMSE for every state component, `values[step][component]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseSeries {
    pub values: Vec<Vec<f64>>,
}

impl RmseSeries {
    pub fn n_steps(&self) -> usize {
        self.values.len()
    }

    /// Time average of each component's RMSE.
    pub fn average(&self) -> Vec<f64> {
        let dim = self.values.first().map_or(0, Vec::len);
        let mut avg = vec![0.0; dim];
        for row in &self.values {
            for (a, v) in avg.iter_mut().zip(row) {
                *a += v;
            }
        }
        let n = self.values.len().max(1) as f64;
        avg.iter_mut().for_each(|a| *a /= n);
        avg
    }
}

/// `RMSE_k = sqrt(mean over runs of (x_k − x̂_k)²)`, per component.
///
/// `estimates[r][k]` and `truths[r][k]` are run `r`, step `k`.
pub fn rmse<S: StateVector>(estimates: &[Vec<S>], truths: &[Vec<S>]) -> Result<RmseSeries> {
    if estimates.len() != truths.len() || estimates.is_empty() {
        return Err(Error::Contract(format!(
            "rmse needs the same nonzero number of runs, got {} estimates and {} truths",
            estimates.len(),
            truths.len()
        )));
    }
    let n_steps = truths[0].len();
    for (r, (e, t)) in estimates.iter().zip(truths).enumerate() {
        if e.len() != n_steps || t.len() != n_steps {
            return Err(Error::Contract(format!(
                "run {r} has {} estimates and {} truths, expected {n_steps}",
                e.len(),
                t.len()
            )));
        }
    }
    let runs = estimates.len() as f64;
    let values = (0..n_steps)
        .map(|k| {
            (0..S::DIM)
                .map(|c| {
                    let sq: f64 = estimates
                        .iter()
                        .zip(truths)
                        .map(|(e, t)| (e[k].component(c) - t[k].component(c)).powi(2))
                        .sum();
                    (sq / runs).sqrt()
                })
                .collect()
        })
        .collect();
    Ok(RmseSeries { values })
}
