//! Simulates the growth model behind a random-delay channel, identifies the
//! latency probability offline, then filters with the estimate.
//!
//! `cargo run --release --example growth_demo`

use delayfilt::channel::LatencyParams;
use delayfilt::experiments::{generate_truth, rmse, run_filter};
use delayfilt::filter::LikelihoodForm;
use delayfilt::identification::{offline_identify, GridSpec, IdentificationOptions};
use delayfilt::models::GrowthModel;

fn main() -> delayfilt::Result<()> {
    let model = GrowthModel::default();
    let truth_channel = LatencyParams::new(0.5, 2)?;

    let ident_data = generate_truth(&model, truth_channel, 500, 1);
    let grid = GridSpec::uniform(0.05)?;
    let id = offline_identify(
        &ident_data.y,
        &grid,
        &model,
        2,
        500,
        2,
        IdentificationOptions::default(),
    )?;
    println!(
        "p_hat = {} (log-likelihood {:.1})",
        id.p_hat, id.ln_likelihood_max
    );

    let run = generate_truth(&model, truth_channel, 50, 3);
    let aware = LatencyParams {
        p: id.p_hat,
        max_delay: 2,
    };
    let est = run_filter(&model, aware, LikelihoodForm::RepeatAware, 1000, &run.y, 4)?;
    let plain = run_filter(
        &model,
        LatencyParams::undelayed(),
        LikelihoodForm::Recursive,
        1000,
        &run.y,
        4,
    )?;

    let truth = vec![run.states.clone()];
    println!(
        "average RMSE, delay-aware: {:.3}",
        rmse(&[est], &truth)?.average()[0]
    );
    println!(
        "average RMSE, standard:    {:.3}",
        rmse(&[plain], &truth)?.average()[0]
    );
    Ok(())
}
