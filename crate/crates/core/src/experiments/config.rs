//! Scenario configuration, read from TOML. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::LatencyParams;
use crate::error::{Error, Result};
use crate::filter::LikelihoodForm;
use crate::identification::GridSpec;
use crate::models::{BotModel, BotParams, GrowthModel, GrowthParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Growth,
    Bot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    /// Plain SIR that takes every received value as the current measurement.
    Standard,
    /// Delay-aware filter with the variant's `max_delay`.
    Proposed,
}

/// One filter run on every Monte Carlo trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantConfig {
    pub name: String,
    pub kind: VariantKind,
    #[serde(default)]
    pub max_delay: usize,
    /// Latency probability assumed by the filter; defaults to `p_true`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

impl VariantConfig {
    pub fn standard() -> Self {
        VariantConfig {
            name: "standard".into(),
            kind: VariantKind::Standard,
            max_delay: 0,
            p: None,
        }
    }

    pub fn proposed(max_delay: usize) -> Self {
        VariantConfig {
            name: format!("proposed_n{max_delay}"),
            kind: VariantKind::Proposed,
            max_delay,
            p: None,
        }
    }

    /// Latency parameters and likelihood form the filter runs with.
    pub fn filter_setup(
        &self,
        p_true: f64,
        form: LikelihoodForm,
    ) -> Result<(LatencyParams, LikelihoodForm)> {
        match self.kind {
            VariantKind::Standard => Ok((LatencyParams::undelayed(), LikelihoodForm::Recursive)),
            VariantKind::Proposed => Ok((
                LatencyParams::new(self.p.unwrap_or(p_true), self.max_delay)?,
                form,
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentificationConfig {
    /// Measurements per offline ensemble.
    pub m: usize,
    /// Offline grid spacing.
    pub sl: f64,
    pub ensembles: usize,
    /// Particles per candidate filter; defaults to the scenario `ns`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ns: Option<usize>,
    /// `N` assumed by the candidate filters; defaults to `n_true`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_delay: Option<usize>,
    pub common_random_numbers: bool,
    pub online_steps: usize,
    pub online_sl: f64,
    pub online_trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub online_ns: Option<usize>,
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        IdentificationConfig {
            m: 500,
            sl: 0.01,
            ensembles: 20,
            ns: None,
            max_delay: None,
            common_random_numbers: false,
            online_steps: 500,
            online_sl: 0.05,
            online_trials: 1,
            online_ns: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub p_values: Vec<f64>,
    /// Monte Carlo runs per sweep point; defaults to the scenario `mc_runs`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_runs: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            p_values: (1..=9).map(|i| i as f64 / 10.0).collect(),
            mc_runs: None,
        }
    }
}

/// Bearing-only tracking settings. The bearing noise is given as a standard
/// deviation in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BotConfig {
    pub sampling_time: f64,
    pub platform_var_x: f64,
    pub platform_var_y: f64,
    pub platform_speed: f64,
    pub platform_height: f64,
    pub process_var: f64,
    pub meas_std_deg: f64,
    pub initial_state: [f64; 2],
    pub prior_var: [f64; 2],
    pub velocity_scaled_by_t: bool,
}

impl Default for BotConfig {
    fn default() -> Self {
        let p = BotParams::default();
        BotConfig {
            sampling_time: p.sampling_time,
            platform_var_x: p.platform_var_x,
            platform_var_y: p.platform_var_y,
            platform_speed: p.platform_speed,
            platform_height: p.platform_height,
            process_var: p.process_var,
            meas_std_deg: (p.meas_var.sqrt().to_degrees() * 1e9).round() / 1e9,
            initial_state: p.initial_state,
            prior_var: p.prior_var,
            velocity_scaled_by_t: p.velocity_scaled_by_t,
        }
    }
}

impl BotConfig {
    pub fn params(&self) -> BotParams {
        let sd = self.meas_std_deg.to_radians();
        BotParams {
            sampling_time: self.sampling_time,
            platform_var_x: self.platform_var_x,
            platform_var_y: self.platform_var_y,
            platform_speed: self.platform_speed,
            platform_height: self.platform_height,
            process_var: self.process_var,
            meas_var: sd * sd,
            initial_state: self.initial_state,
            prior_var: self.prior_var,
            velocity_scaled_by_t: self.velocity_scaled_by_t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_p_true")]
    pub p_true: f64,
    #[serde(default = "default_n_true")]
    pub n_true: usize,
    #[serde(default = "default_ns")]
    pub ns: usize,
    #[serde(default = "default_n_steps")]
    pub n_steps: usize,
    #[serde(default = "default_mc_runs")]
    pub mc_runs: usize,
    #[serde(default)]
    pub likelihood: LikelihoodForm,
    #[serde(default = "default_variants")]
    pub variants: Vec<VariantConfig>,
    #[serde(default)]
    pub identification: IdentificationConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub growth: GrowthParams,
    #[serde(default)]
    pub bot: BotConfig,
}

fn default_seed() -> u64 {
    1
}
fn default_p_true() -> f64 {
    0.5
}
fn default_n_true() -> usize {
    2
}
fn default_ns() -> usize {
    1000
}
fn default_n_steps() -> usize {
    50
}
fn default_mc_runs() -> usize {
    100
}
fn default_variants() -> Vec<VariantConfig> {
    vec![
        VariantConfig::standard(),
        VariantConfig::proposed(1),
        VariantConfig::proposed(2),
    ]
}

impl ScenarioConfig {
    /// Defaults for `model`, as if the file held only the `model` key.
    pub fn new(model: ModelKind) -> Self {
        ScenarioConfig {
            model,
            seed: default_seed(),
            out_dir: None,
            p_true: default_p_true(),
            n_true: default_n_true(),
            ns: default_ns(),
            n_steps: default_n_steps(),
            mc_runs: default_mc_runs(),
            likelihood: LikelihoodForm::default(),
            variants: default_variants(),
            identification: IdentificationConfig::default(),
            sweep: SweepConfig::default(),
            growth: GrowthParams::default(),
            bot: BotConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Canonical TOML form, used for the manifest echo.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn true_latency(&self) -> Result<LatencyParams> {
        LatencyParams::new(self.p_true, self.n_true)
    }

    pub fn ident_ns(&self) -> usize {
        self.identification.ns.unwrap_or(self.ns)
    }

    pub fn ident_max_delay(&self) -> usize {
        self.identification.max_delay.unwrap_or(self.n_true)
    }

    pub fn online_ns(&self) -> usize {
        self.identification.online_ns.unwrap_or(self.ns)
    }

    pub fn sweep_mc_runs(&self) -> usize {
        self.sweep.mc_runs.unwrap_or(self.mc_runs)
    }

    pub fn growth_model(&self) -> Result<GrowthModel> {
        GrowthModel::new(self.growth)
    }

    pub fn bot_model(&self) -> Result<BotModel> {
        BotModel::new(self.bot.params())
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        let positive = [
            ("ns", self.ns),
            ("n_steps", self.n_steps),
            ("mc_runs", self.mc_runs),
            ("identification.ensembles", self.identification.ensembles),
            (
                "identification.online_steps",
                self.identification.online_steps,
            ),
            (
                "identification.online_trials",
                self.identification.online_trials,
            ),
            ("identification.ns", self.ident_ns()),
            ("identification.online_ns", self.online_ns()),
            ("sweep.mc_runs", self.sweep_mc_runs()),
        ];
        for (name, v) in positive {
            if v == 0 {
                return cfg_err(format!("{name} must be at least 1"));
            }
        }
        if self.identification.m < 2 {
            return cfg_err("identification.m must be at least 2".into());
        }
        if self.seed > i64::MAX as u64 {
            return cfg_err(format!("seed must be at most {}", i64::MAX));
        }
        self.true_latency().map_err(as_config)?;
        for (name, sl) in [
            ("identification.sl", self.identification.sl),
            ("identification.online_sl", self.identification.online_sl),
        ] {
            GridSpec::uniform(sl).map_err(as_config)?;
            if ((1.0 / sl) - (1.0 / sl).round()).abs() > 1e-9 {
                return cfg_err(format!("{name} = {sl} does not divide [0, 1] evenly"));
            }
        }

        if self.variants.is_empty() {
            return cfg_err("at least one filter variant is required".into());
        }
        for (i, v) in self.variants.iter().enumerate() {
            let safe = !v.name.is_empty()
                && v.name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !safe {
                return cfg_err(format!(
                    "variant name {:?} must be nonempty and use only [A-Za-z0-9_-]",
                    v.name
                ));
            }
            if self.variants[..i].iter().any(|o| o.name == v.name) {
                return cfg_err(format!("duplicate variant name {:?}", v.name));
            }
            v.filter_setup(self.p_true, self.likelihood)
                .map_err(as_config)?;
        }
        if self.sweep.p_values.is_empty() {
            return cfg_err("sweep.p_values must not be empty".into());
        }
        for &p in &self.sweep.p_values {
            LatencyParams::new(p, self.n_true).map_err(as_config)?;
        }
        match self.model {
            ModelKind::Growth => self.growth_model().map(|_| ()),
            ModelKind::Bot => self.bot_model().map(|_| ()),
        }
        .map_err(as_config)
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(m),
        other => Error::Config(other.to_string()),
    }
}
