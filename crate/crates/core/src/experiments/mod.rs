//! Truth generation, Monte Carlo and identification studies, and the
//! config-driven runs behind the command line tool.

mod config;
mod metrics;
mod runner;
mod truth;

pub use config::{
    BotConfig, IdentificationConfig, ModelKind, ScenarioConfig, SweepConfig, VariantConfig,
    VariantKind,
};
pub use metrics::{rmse, RmseSeries};
pub use runner::{
    execute, job_seed, run_filter, run_id, run_monte_carlo, run_offline_study, run_online_study,
    run_sweep, write_offline_csv, write_online_csv, write_rmse_csv, write_sweep_csv, Mode,
    OfflineStudy, OnlineTrace, RunMetrics, RunOutput, SweepResult, SweepRow, VariantRmse,
};
pub use truth::{generate_truth, Truth};
