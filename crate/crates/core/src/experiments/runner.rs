//! Monte Carlo and identification drivers, CSV writers and the run manifest.
//!
//! Every job seed is `mix_seed(mix_seed(master, tag), index)`, so results do
//! not depend on thread scheduling and any single job can be replayed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::{ModelKind, ScenarioConfig};
use super::metrics::{rmse, RmseSeries};
use super::truth::generate_truth;
use crate::channel::LatencyParams;
use crate::error::{Error, Result};
use crate::filter::{filter_step, init_filter, LikelihoodForm};
use crate::identification::{
    offline_identify, online_identify_step, GridSpec, IdentificationOptions, OnlineIdentState,
};
use crate::models::SystemModel;
use crate::numeric::{mix_seed, RngStream};

const TAG_MC_TRUTH: u64 = 0x11;
const TAG_MC_FILTER: u64 = 0x12;
const TAG_OFFLINE_DATA: u64 = 0x21;
const TAG_OFFLINE_FILTER: u64 = 0x22;
const TAG_ONLINE_DATA: u64 = 0x31;
const TAG_ONLINE_FILTER: u64 = 0x32;
const TAG_SWEEP: u64 = 0x41;

const SEED_TAGS: [(&str, u64); 7] = [
    ("mc_truth", TAG_MC_TRUTH),
    ("mc_filter", TAG_MC_FILTER),
    ("offline_data", TAG_OFFLINE_DATA),
    ("offline_filter", TAG_OFFLINE_FILTER),
    ("online_data", TAG_ONLINE_DATA),
    ("online_filter", TAG_ONLINE_FILTER),
    ("sweep", TAG_SWEEP),
];

pub fn job_seed(master: u64, tag: u64, index: u64) -> u64 {
    mix_seed(mix_seed(master, tag), index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Filter,
    IdentifyOffline,
    IdentifyOnline,
    Sweep,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Filter => "filter",
            Mode::IdentifyOffline => "identify-offline",
            Mode::IdentifyOnline => "identify-online",
            Mode::Sweep => "sweep",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "filter" => Ok(Mode::Filter),
            "identify-offline" => Ok(Mode::IdentifyOffline),
            "identify-online" => Ok(Mode::IdentifyOnline),
            "sweep" => Ok(Mode::Sweep),
            other => Err(format!(
                "unknown mode {other:?}; expected filter, identify-offline, identify-online or sweep"
            )),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Runs one filter over `y` and returns the per-step estimates.
pub fn run_filter<M: SystemModel>(
    model: &M,
    latency: LatencyParams,
    form: LikelihoodForm,
    ns: usize,
    y: &[f64],
    seed: u64,
) -> Result<Vec<M::State>> {
    let mut rng = RngStream::new(seed);
    let mut ps = init_filter(model, latency, ns, &mut rng)?.with_form(form);
    y.iter()
        .enumerate()
        .map(|(i, &yk)| filter_step(&mut ps, yk, model, i + 1, &mut rng).map(|r| r.estimate.mean))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantRmse {
    pub name: String,
    pub rmse: RmseSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub variants: Vec<VariantRmse>,
    /// Runs that entered the averages.
    pub runs: usize,
    /// Runs where some variant failed; excluded for every variant.
    pub failed_runs: usize,
}

impl RunMetrics {
    pub fn variant(&self, name: &str) -> Option<&VariantRmse> {
        self.variants.iter().find(|v| v.name == name)
    }
}

/// Fresh truth per run, every configured variant on the same received
/// sequence, RMSE over the surviving runs.
pub fn run_monte_carlo<M: SystemModel>(model: &M, cfg: &ScenarioConfig) -> Result<RunMetrics> {
    monte_carlo_at(model, cfg, cfg.p_true, cfg.mc_runs, cfg.seed)
}

fn monte_carlo_at<M: SystemModel>(
    model: &M,
    cfg: &ScenarioConfig,
    p_true: f64,
    mc_runs: usize,
    seed: u64,
) -> Result<RunMetrics> {
    let truth_latency = LatencyParams::new(p_true, cfg.n_true)?;
    let setups = cfg
        .variants
        .iter()
        .map(|v| v.filter_setup(p_true, cfg.likelihood))
        .collect::<Result<Vec<_>>>()?;

    let runs: Vec<Result<(Vec<M::State>, Vec<Vec<M::State>>)>> = (0..mc_runs as u64)
        .into_par_iter()
        .map(|r| {
            let truth = generate_truth(
                model,
                truth_latency,
                cfg.n_steps,
                job_seed(seed, TAG_MC_TRUTH, r),
            );
            let filter_seed = job_seed(seed, TAG_MC_FILTER, r);
            let estimates = setups
                .iter()
                .map(|&(lat, form)| run_filter(model, lat, form, cfg.ns, &truth.y, filter_seed))
                .collect::<Result<Vec<_>>>()?;
            Ok((truth.states, estimates))
        })
        .collect();

    let mut truths = Vec::new();
    let mut per_variant: Vec<Vec<Vec<M::State>>> = vec![Vec::new(); setups.len()];
    let mut failed_runs = 0;
    for run in runs {
        match run {
            Ok((states, estimates)) => {
                truths.push(states);
                for (acc, e) in per_variant.iter_mut().zip(estimates) {
                    acc.push(e);
                }
            }
            Err(_) => failed_runs += 1,
        }
    }
    if truths.is_empty() {
        return Err(Error::Numeric(format!(
            "all {mc_runs} Monte Carlo runs failed"
        )));
    }
    let variants = cfg
        .variants
        .iter()
        .zip(&per_variant)
        .map(|(v, est)| {
            Ok(VariantRmse {
                name: v.name.clone(),
                rmse: rmse(est, &truths)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunMetrics {
        variants,
        runs: truths.len(),
        failed_runs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineStudy {
    /// `(ensemble, p̂)` for every ensemble that produced an estimate.
    pub estimates: Vec<(usize, f64)>,
    pub failed: Vec<usize>,
}

impl OfflineStudy {
    pub fn mean(&self) -> Option<f64> {
        if self.estimates.is_empty() {
            None
        } else {
            Some(self.estimates.iter().map(|e| e.1).sum::<f64>() / self.estimates.len() as f64)
        }
    }
}

fn ident_options(cfg: &ScenarioConfig) -> IdentificationOptions {
    IdentificationOptions {
        common_random_numbers: cfg.identification.common_random_numbers,
        form: cfg.likelihood,
    }
}

/// Offline grid search on `identification.ensembles` independent data sets.
pub fn run_offline_study<M: SystemModel>(model: &M, cfg: &ScenarioConfig) -> Result<OfflineStudy> {
    let grid = GridSpec::uniform(cfg.identification.sl)?;
    let latency = cfg.true_latency()?;
    let results: Vec<Result<f64>> = (0..cfg.identification.ensembles as u64)
        .into_par_iter()
        .map(|e| {
            let data = generate_truth(
                model,
                latency,
                cfg.identification.m,
                job_seed(cfg.seed, TAG_OFFLINE_DATA, e),
            );
            offline_identify(
                &data.y,
                &grid,
                model,
                cfg.ident_max_delay(),
                cfg.ident_ns(),
                job_seed(cfg.seed, TAG_OFFLINE_FILTER, e),
                ident_options(cfg),
            )
            .map(|r| r.p_hat.value())
        })
        .collect();

    let mut study = OfflineStudy {
        estimates: Vec::new(),
        failed: Vec::new(),
    };
    for (e, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => study.estimates.push((e, p)),
            Err(Error::IdentificationFailed) => study.failed.push(e),
            Err(other) => return Err(other),
        }
    }
    Ok(study)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineTrace {
    pub p_hat: Vec<f64>,
    pub running_average: Vec<f64>,
}

impl OnlineTrace {
    pub fn final_average(&self) -> Option<f64> {
        self.running_average.last().copied()
    }
}

/// One online identification pass per trial over fresh data.
pub fn run_online_study<M: SystemModel>(
    model: &M,
    cfg: &ScenarioConfig,
) -> Result<Vec<OnlineTrace>> {
    let grid = GridSpec::uniform(cfg.identification.online_sl)?;
    let latency = cfg.true_latency()?;
    (0..cfg.identification.online_trials as u64)
        .into_par_iter()
        .map(|t| {
            let data = generate_truth(
                model,
                latency,
                cfg.identification.online_steps,
                job_seed(cfg.seed, TAG_ONLINE_DATA, t),
            );
            let mut state = OnlineIdentState::new(
                model,
                &grid,
                cfg.ident_max_delay(),
                cfg.online_ns(),
                job_seed(cfg.seed, TAG_ONLINE_FILTER, t),
                ident_options(cfg),
            )?;
            let mut trace = OnlineTrace {
                p_hat: Vec::new(),
                running_average: Vec::new(),
            };
            for (i, &y) in data.y.iter().enumerate() {
                let p = online_identify_step(&mut state, y, model, i + 1)?;
                trace.p_hat.push(p.value());
                trace
                    .running_average
                    .push(state.running_average().unwrap_or(p.value()));
            }
            Ok(trace)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub p_true: f64,
    pub variant: String,
    pub component: usize,
    pub avg_rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub failed_runs: usize,
}

impl SweepResult {
    pub fn avg_rmse(&self, p_true: f64, variant: &str, component: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.p_true == p_true && r.variant == variant && r.component == component)
            .map(|r| r.avg_rmse)
    }
}

/// Average RMSE of every variant for each `p_true` in `sweep.p_values`.
pub fn run_sweep<M: SystemModel>(model: &M, cfg: &ScenarioConfig) -> Result<SweepResult> {
    let mut out = SweepResult {
        rows: Vec::new(),
        failed_runs: 0,
    };
    for (i, &p) in cfg.sweep.p_values.iter().enumerate() {
        let metrics = monte_carlo_at(
            model,
            cfg,
            p,
            cfg.sweep_mc_runs(),
            job_seed(cfg.seed, TAG_SWEEP, i as u64),
        )?;
        out.failed_runs += metrics.failed_runs;
        for v in &metrics.variants {
            for (component, avg_rmse) in v.rmse.average().into_iter().enumerate() {
                out.rows.push(SweepRow {
                    p_true: p,
                    variant: v.name.clone(),
                    component,
                    avg_rmse,
                });
            }
        }
    }
    Ok(out)
}

pub fn write_rmse_csv(path: &Path, series: &RmseSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "component", "rmse"])?;
    for (k, row) in series.values.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            w.write_record([(k + 1).to_string(), c.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_offline_csv(path: &Path, study: &OfflineStudy) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["ensemble", "p_hat"])?;
    for (e, p) in &study.estimates {
        w.write_record([e.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_online_csv(path: &Path, traces: &[OnlineTrace]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trial", "step", "p_hat", "running_avg"])?;
    for (t, trace) in traces.iter().enumerate() {
        for (k, (p, avg)) in trace.p_hat.iter().zip(&trace.running_average).enumerate() {
            w.write_record([
                t.to_string(),
                (k + 1).to_string(),
                p.to_string(),
                avg.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, sweep: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["p_true", "variant", "component", "avg_rmse"])?;
    for r in &sweep.rows {
        w.write_record([
            r.p_true.to_string(),
            r.variant.clone(),
            r.component.to_string(),
            r.avg_rmse.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// First 12 hex digits of the SHA-256 of the mode and canonical config.
pub fn run_id(cfg: &ScenarioConfig, mode: Mode) -> String {
    let digest = Sha256::new()
        .chain_update(mode.as_str().as_bytes())
        .chain_update(b"\n")
        .chain_update(cfg.to_toml().as_bytes())
        .finalize();
    digest.iter().take(6).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Outcome of [`execute`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub run_id: String,
    pub files: Vec<PathBuf>,
    /// Failed Monte Carlo runs or identification ensembles.
    pub failures: usize,
    /// One line per headline number, for the terminal.
    pub summary: Vec<String>,
}

/// Runs `mode` and writes its CSV files and the manifest into `out_dir`.
pub fn execute(cfg: &ScenarioConfig, mode: Mode, out_dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut out = match cfg.model {
        ModelKind::Growth => execute_with(&cfg.growth_model()?, cfg, mode, out_dir)?,
        ModelKind::Bot => execute_with(&cfg.bot_model()?, cfg, mode, out_dir)?,
    };
    let manifest = out_dir.join("manifest");
    fs::write(&manifest, manifest_text(cfg, mode, &out))?;
    out.files.push(manifest);
    Ok(out)
}

fn execute_with<M: SystemModel>(
    model: &M,
    cfg: &ScenarioConfig,
    mode: Mode,
    dir: &Path,
) -> Result<RunOutput> {
    let mut out = RunOutput {
        run_id: run_id(cfg, mode),
        files: Vec::new(),
        failures: 0,
        summary: Vec::new(),
    };
    match mode {
        Mode::Filter => {
            let metrics = run_monte_carlo(model, cfg)?;
            for v in &metrics.variants {
                let path = dir.join(format!("rmse_{}.csv", v.name));
                write_rmse_csv(&path, &v.rmse)?;
                out.files.push(path);
                out.summary.push(format!(
                    "{}: average RMSE {}",
                    v.name,
                    fmt_list(&v.rmse.average())
                ));
            }
            out.failures = metrics.failed_runs;
        }
        Mode::IdentifyOffline => {
            let study = run_offline_study(model, cfg)?;
            let path = dir.join("ident_offline.csv");
            write_offline_csv(&path, &study)?;
            out.files.push(path);
            out.failures = study.failed.len();
            match study.mean() {
                Some(m) => out.summary.push(format!(
                    "mean p_hat over {} ensembles: {m:.4}",
                    study.estimates.len()
                )),
                None => return Err(Error::IdentificationFailed),
            }
        }
        Mode::IdentifyOnline => {
            let traces = run_online_study(model, cfg)?;
            let path = dir.join("ident_online.csv");
            write_online_csv(&path, &traces)?;
            out.files.push(path);
            for (t, trace) in traces.iter().enumerate() {
                if let Some(avg) = trace.final_average() {
                    out.summary
                        .push(format!("trial {t}: final running average {avg:.4}"));
                }
            }
        }
        Mode::Sweep => {
            let sweep = run_sweep(model, cfg)?;
            let path = dir.join("sweep.csv");
            write_sweep_csv(&path, &sweep)?;
            out.files.push(path);
            out.failures = sweep.failed_runs;
            out.summary.push(format!("{} sweep rows", sweep.rows.len()));
        }
    }
    Ok(out)
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.4}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn manifest_text(cfg: &ScenarioConfig, mode: Mode, out: &RunOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "run_id = \"{}\"", out.run_id);
    let _ = writeln!(s, "mode = \"{mode}\"");
    let _ = writeln!(s, "version = \"{}\"", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "failures = {}", out.failures);
    let _ = writeln!(
        s,
        "files = [{}]",
        out.files
            .iter()
            .filter_map(|p| p.file_name())
            .map(|n| format!("\"{}\"", n.to_string_lossy()))
            .collect::<Vec<_>>()
            .join(", ")
    );
    let _ = writeln!(
        s,
        "\n# task seed = mix_seed(master, tag); job i of a task uses mix_seed(task seed, i)"
    );
    let _ = writeln!(s, "[seeds]\nmaster = {}", cfg.seed);
    for (name, tag) in SEED_TAGS {
        let _ = writeln!(s, "{name} = \"{:#018x}\"", mix_seed(cfg.seed, tag));
    }
    let _ = writeln!(s, "\n[config]");
    for line in cfg.to_toml().lines() {
        // nest the echoed tables under [config]
        if let Some(rest) = line.strip_prefix("[[") {
            let _ = writeln!(s, "[[config.{rest}");
        } else if let Some(rest) = line.strip_prefix('[') {
            let _ = writeln!(s, "[config.{rest}");
        } else {
            let _ = writeln!(s, "{line}");
        }
    }
    s
}
