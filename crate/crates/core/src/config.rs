//! TOML run configuration for the `mtbe` tool.
//!
//! Every section rejects unknown keys. Missing keys fall back to the
//! defaults of the study: the four reference models, the six halving and
//! doubling shifts, target ATS₀ 200, 100 000 runs, and a 50-sample burn-in.
//!
//! ```toml
//! seed = 7
//! quick = true
//!
//! [[models]]
//! name = "model1"
//! theta1 = 1.0
//! theta2 = 2.0
//! delta = 1.0
//!
//! [chart]
//! family = "pewma"
//! lambda = 0.1
//! direction = "lower"
//!
//! [simulation]
//! target_ats0 = 200.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charts::{Direction, ShewhartTbeConfig};
use crate::model_gumbel::GumbelBveParams;
use crate::scenarios::{Grouping, PewmaTiming, ShiftSpec, VectorRunOptions, DEFAULT_VECTOR_CAP};
use crate::simulation::{
    reference_models, reference_shifts, AtsMode, FalseAlarmPolicy, SteadyStateConfig, DEFAULT_BURN_IN, DEFAULT_N_REPS,
    DEFAULT_REL_TOL, DEFAULT_REPS_PER_EVAL,
};

pub const SEED_ENV: &str = "MTBE_SEED";
pub const WORKERS_ENV: &str = "MTBE_WORKERS";

pub const QUICK_N_REPS: usize = 10_000;
pub const QUICK_REPS_PER_EVAL: usize = 2_000;

const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialisation error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("environment variable {name}={value:?} is not a valid {expected}")]
    Env {
        name: &'static str,
        value: String,
        expected: &'static str,
    },
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads; `None` means one per available core.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Replace the replication counts by the quick-mode values.
    #[serde(default)]
    pub quick: bool,
    #[serde(default = "default_models")]
    pub models: Vec<ModelEntry>,
    #[serde(default = "reference_shifts")]
    pub shifts: Vec<ShiftSpec>,
    #[serde(default)]
    pub chart: ChartSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitor: Option<MonitorSection>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_models() -> Vec<ModelEntry> {
    reference_models()
        .into_iter()
        .map(|(name, p)| ModelEntry {
            name,
            theta1: p.theta1(),
            theta2: p.theta2(),
            delta: p.delta(),
        })
        .collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            workers: None,
            quick: false,
            models: default_models(),
            shifts: reference_shifts(),
            chart: ChartSection::default(),
            simulation: SimulationSection::default(),
            output: OutputSection::default(),
            monitor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub name: String,
    pub theta1: f64,
    pub theta2: f64,
    pub delta: f64,
}

impl ModelEntry {
    pub fn params(&self) -> Result<GumbelBveParams, ConfigError> {
        GumbelBveParams::new(self.theta1, self.theta2, self.delta)
            .map_err(|e| ConfigError::Invalid(format!("model `{}`: {e}", self.name)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Mewma,
    Pewma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSection {
    #[serde(default = "default_family")]
    pub family: FamilyName,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// PEWMA side. `None` means both sides where that makes sense.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    /// Fixed MEWMA limit; skips calibration in `ats` and drives `monitor`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// Fixed PEWMA proportional scale `c` (limits `c·θ0j`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

fn default_family() -> FamilyName {
    FamilyName::Mewma
}

fn default_lambda() -> f64 {
    0.1
}

impl Default for ChartSection {
    fn default() -> Self {
        Self {
            family: default_family(),
            lambda: default_lambda(),
            direction: None,
            h: None,
            scale: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    InControl,
    ZeroState,
    SteadyState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_target")]
    pub target_ats0: f64,
    #[serde(default = "default_n_reps")]
    pub n_reps: usize,
    #[serde(default = "default_reps_per_eval")]
    pub reps_per_eval: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: u64,
    #[serde(default = "default_mode")]
    pub mode: ModeName,
    /// Vectors per run before it is censored.
    #[serde(default = "default_cap")]
    pub cap: u64,
    #[serde(default)]
    pub pewma_timing: PewmaTiming,
    #[serde(default)]
    pub false_alarms: FalseAlarmPolicy,
}

fn default_target() -> f64 {
    200.0
}
fn default_n_reps() -> usize {
    DEFAULT_N_REPS
}
fn default_reps_per_eval() -> usize {
    DEFAULT_REPS_PER_EVAL
}
fn default_rel_tol() -> f64 {
    DEFAULT_REL_TOL
}
fn default_burn_in() -> u64 {
    DEFAULT_BURN_IN
}
fn default_mode() -> ModeName {
    ModeName::SteadyState
}
fn default_cap() -> u64 {
    DEFAULT_VECTOR_CAP
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            target_ats0: default_target(),
            n_reps: default_n_reps(),
            reps_per_eval: default_reps_per_eval(),
            rel_tol: default_rel_tol(),
            burn_in: default_burn_in(),
            mode: default_mode(),
            cap: default_cap(),
            pewma_timing: PewmaTiming::default(),
            false_alarms: FalseAlarmPolicy::default(),
        }
    }
}

impl SimulationSection {
    pub fn steady_state(&self) -> SteadyStateConfig {
        SteadyStateConfig {
            burn_in_samples: self.burn_in,
            false_alarms: self.false_alarms,
            ..SteadyStateConfig::default()
        }
    }

    pub fn ats_mode(&self) -> AtsMode {
        match self.mode {
            ModeName::InControl => AtsMode::InControl,
            ModeName::ZeroState => AtsMode::ZeroState,
            ModeName::SteadyState => AtsMode::SteadyState(self.steady_state()),
        }
    }

    pub fn run_options(&self) -> VectorRunOptions {
        VectorRunOptions {
            cap: self.cap,
            pewma_timing: self.pewma_timing,
            restart_before_change: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ats_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scatter_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MonitorChart {
    /// Per-stream thresholds from `limits`.
    Shewhart,
    /// The `[chart]` section's MEWMA or PEWMA with fixed `h` or `scale`.
    Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorSection {
    pub streams: Vec<String>,
    #[serde(default = "default_grouping")]
    pub grouping: Grouping,
    #[serde(default = "default_monitor_chart")]
    pub chart: MonitorChart,
    /// `(lower, upper)` per stream for the Shewhart chart.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<ShewhartTbeConfig>,
    /// In-control model for vector charts; defaults to the first model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

fn default_grouping() -> Grouping {
    Grouping::PerStream
}

fn default_monitor_chart() -> MonitorChart {
    MonitorChart::Shewhart
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    /// Apply `MTBE_SEED` / `MTBE_WORKERS` from `lookup` (normally
    /// `std::env::var`). Environment values override the file.
    pub fn apply_env<F: Fn(&str) -> Option<String>>(&mut self, lookup: F) -> Result<(), ConfigError> {
        if let Some(v) = lookup(SEED_ENV) {
            self.seed = v.trim().parse().map_err(|_| ConfigError::Env {
                name: SEED_ENV,
                value: v.clone(),
                expected: "unsigned integer",
            })?;
        }
        if let Some(v) = lookup(WORKERS_ENV) {
            let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| ConfigError::Env {
                name: WORKERS_ENV,
                value: v.clone(),
                expected: "positive integer",
            })?;
            self.workers = Some(n);
        }
        Ok(())
    }

    /// Replication counts after quick mode is taken into account.
    pub fn reps(&self) -> (usize, usize) {
        if self.quick {
            (QUICK_N_REPS, QUICK_REPS_PER_EVAL)
        } else {
            (self.simulation.n_reps, self.simulation.reps_per_eval)
        }
    }

    pub fn model(&self, name: &str) -> Result<(String, GumbelBveParams), ConfigError> {
        let entry = self
            .models
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| ConfigError::Invalid(format!("no model named `{name}`")))?;
        Ok((entry.name.clone(), entry.params()?))
    }

    pub fn named_models(&self) -> Result<Vec<(String, GumbelBveParams)>, ConfigError> {
        self.models.iter().map(|m| Ok((m.name.clone(), m.params()?))).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.workers == Some(0) {
            return invalid("workers must be at least 1");
        }
        if self.models.is_empty() {
            return invalid("at least one model is required");
        }
        for (i, m) in self.models.iter().enumerate() {
            if m.name.is_empty() || m.name.contains([',', '"', '\n']) {
                return invalid(format!("model name {:?} must be non-empty without commas or quotes", m.name));
            }
            if self.models[..i].iter().any(|o| o.name == m.name) {
                return invalid(format!("duplicate model name `{}`", m.name));
            }
            m.params()?;
        }

        let c = &self.chart;
        if !(c.lambda > 0.0 && c.lambda <= 1.0) {
            return invalid(format!("chart.lambda must lie in (0, 1], got {}", c.lambda));
        }
        if let Some(h) = c.h {
            if !(h > 0.0 && h.is_finite()) {
                return invalid(format!("chart.h must be positive, got {h}"));
            }
        }
        if let Some(s) = c.scale {
            if !(s > 0.0 && s.is_finite()) {
                return invalid(format!("chart.scale must be positive, got {s}"));
            }
            match c.direction {
                Some(Direction::Upper) if s <= 1.0 => return invalid("upper PEWMA needs chart.scale > 1"),
                Some(Direction::Lower) if s >= 1.0 => return invalid("lower PEWMA needs chart.scale < 1"),
                None if c.family == FamilyName::Pewma => {
                    return invalid("chart.scale needs chart.direction")
                }
                _ => {}
            }
        }

        let s = &self.simulation;
        if !(s.target_ats0 > 0.0 && s.target_ats0.is_finite()) {
            return invalid(format!("simulation.target_ats0 must be positive, got {}", s.target_ats0));
        }
        if !(s.rel_tol > 0.0 && s.rel_tol <= 0.1) {
            return invalid(format!("simulation.rel_tol must lie in (0, 0.1], got {}", s.rel_tol));
        }
        if s.n_reps == 0 || s.reps_per_eval == 0 {
            return invalid("simulation.n_reps and simulation.reps_per_eval must be positive");
        }
        if s.cap == 0 {
            return invalid("simulation.cap must be positive");
        }

        if let Some(m) = &self.monitor {
            if m.streams.is_empty() {
                return invalid("monitor.streams must not be empty");
            }
            for (i, id) in m.streams.iter().enumerate() {
                if id.is_empty() || id.contains(',') {
                    return invalid(format!("stream id {id:?} must be non-empty without commas"));
                }
                if m.streams[..i].contains(id) {
                    return invalid(format!("duplicate stream id `{id}`"));
                }
            }
            match m.chart {
                MonitorChart::Shewhart => {
                    if m.grouping != Grouping::PerStream {
                        return invalid("the Shewhart monitor works per stream only");
                    }
                    match &m.limits {
                        None => return invalid("monitor.limits is required for the Shewhart chart"),
                        Some(l) if l.streams() != m.streams.len() => {
                            return invalid(format!(
                                "monitor.limits has {} entries for {} streams",
                                l.streams(),
                                m.streams.len()
                            ))
                        }
                        _ => {}
                    }
                }
                MonitorChart::Vector => {
                    if m.streams.len() != 2 {
                        return invalid("vector charts monitor exactly two streams");
                    }
                    if m.grouping != Grouping::VectorAssembly {
                        return invalid("vector charts need grouping = \"vector-assembly\"");
                    }
                    match c.family {
                        FamilyName::Mewma if c.h.is_none() => return invalid("monitoring with MEWMA needs chart.h"),
                        FamilyName::Pewma if c.scale.is_none() => {
                            return invalid("monitoring with PEWMA needs chart.scale and chart.direction")
                        }
                        _ => {}
                    }
                    if let Some(name) = &m.model {
                        self.model(name)?;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
seed = 11
workers = 3
quick = true
shifts = [[0.5, 1.0], [2.0, 2.0]]

[[models]]
name = "a"
theta1 = 1.0
theta2 = 2.0
delta = 0.5

[chart]
family = "pewma"
lambda = 0.2
direction = "lower"
scale = 0.6

[simulation]
target_ats0 = 100.0
n_reps = 500
reps_per_eval = 100
rel_tol = 0.02
burn_in = 10
mode = "zero-state"
cap = 1000
pewma_timing = "vector-completion"

[output]
table_csv = "t.csv"
scatter_csv = "s.csv"

[monitor]
streams = ["x", "y"]
grouping = "vector-assembly"
chart = "vector"
model = "a"
"#;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.models.len(), 4);
        assert_eq!(cfg.shifts.len(), 6);
        assert_eq!(cfg.reps(), (100_000, 20_000));
    }

    #[test]
    fn full_file_parses() {
        let cfg = RunConfig::from_toml(FULL).unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.reps(), (QUICK_N_REPS, QUICK_REPS_PER_EVAL));
        assert_eq!(cfg.chart.direction, Some(Direction::Lower));
        assert_eq!(cfg.simulation.ats_mode(), AtsMode::ZeroState);
        assert_eq!(cfg.simulation.run_options().pewma_timing, PewmaTiming::VectorCompletion);
        assert_eq!(cfg.monitor.as_ref().unwrap().grouping, Grouping::VectorAssembly);
    }

    #[test]
    fn round_trip_is_identity() {
        for text in ["", FULL] {
            let cfg = RunConfig::from_toml(text).unwrap();
            let again = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
            assert_eq!(cfg, again);
        }
    }

    #[test]
    fn round_trip_shewhart_with_infinite_limit() {
        let text = "[monitor]\nstreams = [\"a\"]\nlimits = [[0.1, inf]]\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "sead = 1",
            "[chart]\nlamda = 0.1",
            "[simulation]\ntarget = 200.0",
            "[[models]]\nname = \"a\"\ntheta1 = 1.0\ntheta2 = 1.0\ndelta = 1.0\nrho = 0.0",
            "[output]\ncsv = \"x\"",
        ] {
            assert!(matches!(RunConfig::from_toml(text), Err(ConfigError::Parse(_))), "{text}");
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            "[simulation]\ntarget_ats0 = 0.0",
            "[simulation]\nrel_tol = 0.5",
            "[simulation]\nn_reps = 0",
            "[chart]\nlambda = 0.0",
            "[chart]\nlambda = 1.5",
            "[[models]]\nname = \"a\"\ntheta1 = -1.0\ntheta2 = 1.0\ndelta = 1.0",
            "[[models]]\nname = \"a\"\ntheta1 = 1.0\ntheta2 = 1.0\ndelta = 1.0\n[[models]]\nname = \"a\"\ntheta1 = 1.0\ntheta2 = 1.0\ndelta = 1.0",
            "[chart]\nfamily = \"pewma\"\ndirection = \"upper\"\nscale = 0.5",
            "[monitor]\nstreams = [\"a\", \"b\"]\nlimits = [[0.0, 1.0]]",
            "[monitor]\nstreams = [\"a\", \"b\"]\nchart = \"vector\"\ngrouping = \"vector-assembly\"",
        ] {
            assert!(matches!(RunConfig::from_toml(text), Err(ConfigError::Invalid(_))), "{text}");
        }
        // Shift and threshold invariants are enforced while parsing.
        assert!(RunConfig::from_toml("shifts = [[0.0, 1.0]]").is_err());
        assert!(RunConfig::from_toml("[monitor]\nstreams = [\"a\"]\nlimits = [[2.0, 1.0]]").is_err());
    }

    #[test]
    fn env_overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_env(|k| match k {
            SEED_ENV => Some("42".into()),
            WORKERS_ENV => Some("8".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!((cfg.seed, cfg.workers), (42, Some(8)));
        assert!(cfg.apply_env(|k| (k == WORKERS_ENV).then(|| "0".into())).is_err());
        assert!(cfg.apply_env(|k| (k == SEED_ENV).then(|| "x".into())).is_err());
    }
}
