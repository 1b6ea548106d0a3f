//! Monte Carlo average-time-to-signal estimation, control-limit
//! calibration, and the MEWMA vs paired-EWMA comparison grid.
//!
//! # Reproducibility
//!
//! Run `k`, attempt `a` of an estimate with base seed `s` draws from a
//! `ChaCha8Rng` seeded with [`run_seed`]`(s, k, a)`. Runs are collected in
//! index order and folded sequentially, so an estimate depends only on its
//! inputs and never on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charts::{ChartError, Direction, MewmaConfig, PewmaConfig, ShewhartTbeConfig, VectorChartConfig};
use crate::model_gumbel::{moments, GumbelBveParams};
use crate::scenarios::{
    run_point_process_scenario, run_vector_scenario, PointProcessScenario, RunOutcome, ScenarioError, ShiftSpec,
    VectorRunOptions, VectorScenario, DEFAULT_TIME_CAP,
};

/// Largest censored fraction for which an estimate is still reported.
pub const MAX_CENSORED_FRACTION: f64 = 0.001;
/// Geometric bracketing gives up after this many expansions.
pub const MAX_EXPANSIONS: usize = 60;
pub const DEFAULT_REPS_PER_EVAL: usize = 20_000;
pub const DEFAULT_N_REPS: usize = 100_000;
pub const DEFAULT_BURN_IN: u64 = 50;
pub const DEFAULT_REL_TOL: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("estimate invalid: {n_censored} of {n_runs} runs censored (limit {limit})", limit = MAX_CENSORED_FRACTION)]
    Censored {
        n_censored: usize,
        n_runs: usize,
        estimate: Box<AtsEstimate>,
    },
    #[error("could not bracket target ATS {target} within {expansions} expansions; ATS seen in [{min_seen:.3}, {max_seen:.3}]")]
    Bracketing {
        target: f64,
        expansions: usize,
        min_seen: f64,
        max_seen: f64,
    },
    #[error("run {run}: no run survived the burn-in after {attempts} attempts")]
    Regeneration { run: usize, attempts: u64 },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("could not build thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// SplitMix64 finaliser.
#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for run `run`, attempt `attempt` of an estimate with base seed `base`.
#[inline]
pub fn run_seed(base: u64, run: u64, attempt: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ run) ^ attempt.rotate_left(32))
}

/// Derive an independent base seed for a labelled sub-experiment.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    label
        .bytes()
        .fold(splitmix64(base ^ 0x5EED), |h, b| splitmix64(h ^ u64::from(b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyStateConfig {
    /// In-control items before the change (vector scenario).
    pub burn_in_samples: u64,
    /// In-control time before the change (point-process scenario).
    #[serde(default = "default_burn_in_time")]
    pub burn_in_time: f64,
    /// Regeneration attempts per run before giving up.
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u64,
    #[serde(default)]
    pub false_alarms: FalseAlarmPolicy,
}

/// What happens to a run that signals during the burn-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FalseAlarmPolicy {
    /// Discard the run and draw a fresh one (counted in `n_discarded`).
    #[default]
    Discard,
    /// Restart the chart at the false alarm and keep the run going.
    Restart,
}

fn default_burn_in_time() -> f64 {
    DEFAULT_BURN_IN as f64
}

fn default_max_attempts() -> u64 {
    100_000
}

impl Default for SteadyStateConfig {
    fn default() -> Self {
        Self {
            burn_in_samples: DEFAULT_BURN_IN,
            burn_in_time: default_burn_in_time(),
            max_attempts: default_max_attempts(),
            false_alarms: FalseAlarmPolicy::Discard,
        }
    }
}

/// Which time-to-signal is averaged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AtsMode {
    /// No change ever; averages `t_A`.
    InControl,
    /// Change at the start; averages `t_A`.
    ZeroState,
    /// Change after the burn-in. Runs that signal before the change are
    /// discarded and regenerated; averages `t_A` minus the change time.
    SteadyState(SteadyStateConfig),
}

/// What is simulated.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSpec {
    Vector {
        model: GumbelBveParams,
        shift: ShiftSpec,
        chart: VectorChartConfig,
        options: VectorRunOptions,
    },
    PointProcess {
        /// Change time is set from the mode.
        scenario: PointProcessScenario,
        charts: ShewhartTbeConfig,
        cap: f64,
    },
}

impl ScenarioSpec {
    pub fn point_process(theta0: Vec<f64>, multipliers: Vec<f64>, charts: ShewhartTbeConfig) -> Result<Self, SimulationError> {
        Ok(ScenarioSpec::PointProcess {
            scenario: PointProcessScenario::new(theta0, multipliers, None)?,
            charts,
            cap: DEFAULT_TIME_CAP,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtsEstimate {
    pub mean_ats: f64,
    /// `None` for a single run.
    pub std_error: Option<f64>,
    pub n_runs: usize,
    pub n_discarded: usize,
    pub n_censored: usize,
    /// Average number of plotted statistics to signal (after the change in
    /// steady state). Diagnostic only.
    pub mean_run_length: f64,
}

impl AtsEstimate {
    pub fn censored_fraction(&self) -> f64 {
        self.n_censored as f64 / self.n_runs as f64
    }

    /// Fraction of attempts discarded for signalling during the burn-in.
    pub fn discard_fraction(&self) -> f64 {
        self.n_discarded as f64 / (self.n_runs + self.n_discarded) as f64
    }

    pub fn std_error_or_nan(&self) -> f64 {
        self.std_error.unwrap_or(f64::NAN)
    }
}

struct RunRecord {
    value: f64,
    run_length: f64,
    censored: bool,
    discarded: u64,
}

/// Parallel Monte Carlo driver. The worker count affects speed only.
pub struct Engine {
    pool: rayon::ThreadPool,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("workers", &self.workers()).finish()
    }
}

impl Engine {
    pub fn new(workers: usize) -> Result<Self, SimulationError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| SimulationError::ThreadPool(e.to_string()))?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    fn single_run(
        &self,
        spec: &ScenarioSpec,
        mode: &AtsMode,
        base_seed: u64,
        run: usize,
    ) -> Result<RunRecord, SimulationError> {
        let (max_attempts, steady) = match mode {
            AtsMode::SteadyState(c) => (c.max_attempts.max(1), true),
            _ => (1, false),
        };
        let mut discarded = 0;
        for attempt in 0..max_attempts {
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed(base_seed, run as u64, attempt));
            let (out, offset): (RunOutcome, u64) = match spec {
                ScenarioSpec::Vector {
                    model,
                    shift,
                    chart,
                    options,
                } => {
                    let change_sample = match mode {
                        AtsMode::InControl => None,
                        AtsMode::ZeroState => Some(0),
                        AtsMode::SteadyState(c) => Some(c.burn_in_samples),
                    };
                    let sc = VectorScenario {
                        in_control: *model,
                        shift: *shift,
                        change_sample,
                    };
                    let options = VectorRunOptions {
                        restart_before_change: matches!(
                            mode,
                            AtsMode::SteadyState(SteadyStateConfig {
                                false_alarms: FalseAlarmPolicy::Restart,
                                ..
                            })
                        ),
                        ..*options
                    };
                    (run_vector_scenario(&sc, chart, &options, &mut rng), change_sample.unwrap_or(0))
                }
                ScenarioSpec::PointProcess { scenario, charts, cap } => {
                    let tau = match mode {
                        AtsMode::InControl => None,
                        AtsMode::ZeroState => Some(0.0),
                        AtsMode::SteadyState(c) => Some(c.burn_in_time),
                    };
                    let sc = scenario.with_change_time(tau);
                    (run_point_process_scenario(&sc, charts, *cap, &mut rng)?, 0)
                }
            };
            if steady && out.false_alarm {
                discarded += 1;
                continue;
            }
            let value = match (mode, out.change_time) {
                (AtsMode::InControl, _) => out.t_a,
                (_, Some(c)) => out.t_a - c,
                // Censored before the change could happen.
                (_, None) => 0.0,
            };
            return Ok(RunRecord {
                value,
                run_length: out.i_a.saturating_sub(offset) as f64,
                censored: out.censored,
                discarded,
            });
        }
        Err(SimulationError::Regeneration {
            run,
            attempts: max_attempts,
        })
    }

    /// Estimate the ATS over `n_reps` independent runs.
    ///
    /// Fails with [`SimulationError::Censored`] when more than 0.1% of the
    /// runs hit the cap; the biased estimate is carried in the error.
    pub fn estimate_ats(
        &self,
        spec: &ScenarioSpec,
        mode: &AtsMode,
        n_reps: usize,
        base_seed: u64,
    ) -> Result<AtsEstimate, SimulationError> {
        if n_reps == 0 {
            return Err(SimulationError::InvalidRequest("n_reps must be at least 1".into()));
        }
        let records: Vec<Result<RunRecord, SimulationError>> = self.pool.install(|| {
            (0..n_reps)
                .into_par_iter()
                .map(|k| self.single_run(spec, mode, base_seed, k))
                .collect()
        });
        let mut sum = 0.0;
        let mut sum_len = 0.0;
        let mut n_censored = 0;
        let mut n_discarded = 0;
        let mut values = Vec::with_capacity(n_reps);
        for r in records {
            let r = r?;
            sum += r.value;
            sum_len += r.run_length;
            n_censored += usize::from(r.censored);
            n_discarded += r.discarded as usize;
            values.push(r.value);
        }
        let n = n_reps as f64;
        let mean = sum / n;
        let std_error = (n_reps > 1).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1.0)).sqrt() / n.sqrt()
        });
        let estimate = AtsEstimate {
            mean_ats: mean,
            std_error,
            n_runs: n_reps,
            n_discarded,
            n_censored,
            mean_run_length: sum_len / n,
        };
        if estimate.censored_fraction() > MAX_CENSORED_FRACTION {
            return Err(SimulationError::Censored {
                n_censored,
                n_runs: n_reps,
                estimate: Box::new(estimate),
            });
        }
        Ok(estimate)
    }

    /// Direct estimate of the probability that an in-control vector chart
    /// signals within the first `samples` items.
    pub fn early_alarm_probability(
        &self,
        model: &GumbelBveParams,
        chart: &VectorChartConfig,
        options: &VectorRunOptions,
        samples: u64,
        n_reps: usize,
        base_seed: u64,
    ) -> f64 {
        let opts = VectorRunOptions { cap: samples, ..*options };
        let hits: usize = self.pool.install(|| {
            (0..n_reps)
                .into_par_iter()
                .map(|k| {
                    let mut rng = ChaCha8Rng::seed_from_u64(run_seed(base_seed, k as u64, 0));
                    usize::from(run_vector_scenario(&VectorScenario::in_control(*model), chart, &opts, &mut rng).signaled)
                })
                .sum()
        });
        hits as f64 / n_reps as f64
    }

    /// Find the limit at which the chart's ATS (under `request.mode`, with no
    /// shift) equals the target.
    ///
    /// The scalar limit parameter is searched by geometric bracketing then
    /// bisection at `reps_per_eval` runs, then refined at `n_reps` runs with
    /// a finer bracket. Every evaluation reuses the same seeds, so the
    /// estimated ATS is a nearly deterministic, monotone function of the
    /// limit.
    pub fn calibrate(&self, request: &CalibrationRequest) -> Result<CalibrationResult, SimulationError> {
        request.validate()?;
        let mut evaluations = 0;
        let target = request.target_ats0;
        let mut eval = |x: f64, reps: usize| -> Result<AtsEstimate, SimulationError> {
            evaluations += 1;
            let chart = request.family.build(&request.model, request.lambda, x)?;
            let spec = ScenarioSpec::Vector {
                model: request.model,
                shift: ShiftSpec::NULL,
                chart,
                options: request.options,
            };
            self.estimate_ats(&spec, &request.mode, reps, request.base_seed)
        };
        let coarse = search(
            &mut eval,
            request.family.initial_parameter(),
            2.0,
            target,
            request.rel_tol,
            request.reps_per_eval,
        )?;
        let (x, estimate) = if request.n_reps == request.reps_per_eval {
            coarse
        } else {
            search(&mut eval, coarse.0, 1.02, target, request.rel_tol, request.n_reps)?
        };
        Ok(CalibrationResult {
            limits: request.family.limits(&request.model, x),
            achieved_ats0: estimate.mean_ats,
            estimate,
            iterations: evaluations,
            reps_per_eval: request.reps_per_eval,
        })
    }

    /// Calibrate every chart and estimate the steady-state ATS of every
    /// shift, for each experiment in turn.
    pub fn run_table1(&self, experiments: &[ExperimentSpec]) -> Result<Table1, SimulationError> {
        let mut table = Table1::default();
        for exp in experiments {
            if exp.shifts.is_empty() {
                continue;
            }
            let mut directions = Vec::new();
            for shift in &exp.shifts {
                let d = shift_direction(shift)?;
                if !directions.contains(&d) {
                    directions.push(d);
                }
            }
            let steady = AtsMode::SteadyState(exp.steady_state);
            let calibrate = |family: ChartFamily| {
                let req = CalibrationRequest {
                    model: exp.model,
                    family,
                    lambda: exp.lambda,
                    target_ats0: exp.target_ats0,
                    rel_tol: exp.rel_tol,
                    reps_per_eval: exp.reps_per_eval,
                    n_reps: exp.n_reps,
                    base_seed: derive_seed(exp.base_seed, &format!("{}/calibrate/{}", exp.name, family)),
                    mode: steady,
                    options: exp.options,
                };
                self.calibrate(&req)
            };
            let mewma = calibrate(ChartFamily::Mewma)?;
            table.calibrations.push((exp.name.clone(), ChartFamily::Mewma, mewma.clone()));
            let mewma_chart = ChartFamily::Mewma.chart_for(&exp.model, exp.lambda, &mewma.limits)?;

            let row_seed = |label: &str| derive_seed(exp.base_seed, &format!("{}/{}", exp.name, label));
            let estimate = |chart: VectorChartConfig, shift: ShiftSpec, seed: u64| {
                let spec = ScenarioSpec::Vector {
                    model: exp.model,
                    shift,
                    chart,
                    options: exp.options,
                };
                self.estimate_ats(&spec, &steady, exp.n_reps, seed)
            };
            let mewma_in_control = estimate(mewma_chart, ShiftSpec::NULL, row_seed("in-control"))?;

            for direction in directions {
                let family = ChartFamily::Pewma(direction);
                let pewma = calibrate(family)?;
                table.calibrations.push((exp.name.clone(), family, pewma.clone()));
                let pewma_chart = family.chart_for(&exp.model, exp.lambda, &pewma.limits)?;
                let pewma_in_control = estimate(pewma_chart, ShiftSpec::NULL, row_seed("in-control"))?;
                table.rows.push(TableRow::new(exp, ShiftSpec::NULL, direction, Method::Mewma, &mewma.limits, mewma_in_control));
                table.rows.push(TableRow::new(exp, ShiftSpec::NULL, direction, Method::Pewma, &pewma.limits, pewma_in_control));
                for shift in exp.shifts.iter().filter(|s| !s.is_null() && shift_direction(s).ok() == Some(direction)) {
                    let seed = row_seed(&shift.label());
                    let m = estimate(mewma_chart, *shift, seed)?;
                    let p = estimate(pewma_chart, *shift, seed)?;
                    table.rows.push(TableRow::new(exp, *shift, direction, Method::Mewma, &mewma.limits, m));
                    table.rows.push(TableRow::new(exp, *shift, direction, Method::Pewma, &pewma.limits, p));
                    table.scatter.push(ScatterPoint {
                        model: exp.name.clone(),
                        shift: *shift,
                        mewma_ats: m.mean_ats,
                        pewma_ats: p.mean_ats,
                    });
                }
            }
        }
        Ok(table)
    }
}

// Bracket and bisect `x > 0` until the estimate is within `rel_tol` of the
// target. ATS is increasing in `x`.
fn search<F>(
    eval: &mut F,
    start: f64,
    factor: f64,
    target: f64,
    rel_tol: f64,
    reps: usize,
) -> Result<(f64, AtsEstimate), SimulationError>
where
    F: FnMut(f64, usize) -> Result<AtsEstimate, SimulationError>,
{
    let close = |e: &AtsEstimate| (e.mean_ats - target).abs() <= rel_tol * target;
    let mut min_seen = f64::INFINITY;
    let mut max_seen = f64::NEG_INFINITY;
    let mut seen = |e: &AtsEstimate| {
        min_seen = min_seen.min(e.mean_ats);
        max_seen = max_seen.max(e.mean_ats);
    };

    let first = eval(start, reps)?;
    seen(&first);
    if close(&first) {
        return Ok((start, first));
    }
    let below = first.mean_ats < target;
    let (mut lo, mut hi) = (start, start);
    let mut best = (start, first);
    let mut bracketed = false;
    for _ in 0..MAX_EXPANSIONS {
        let x = if below { hi * factor } else { lo / factor };
        let e = eval(x, reps)?;
        seen(&e);
        if close(&e) {
            return Ok((x, e));
        }
        if (e.mean_ats - target).abs() < (best.1.mean_ats - target).abs() {
            best = (x, e);
        }
        if below {
            if e.mean_ats >= target {
                (lo, hi) = (hi, x);
                bracketed = true;
                break;
            }
            hi = x;
        } else {
            if e.mean_ats < target {
                (lo, hi) = (x, lo);
                bracketed = true;
                break;
            }
            lo = x;
        }
    }
    if !bracketed {
        return Err(SimulationError::Bracketing {
            target,
            expansions: MAX_EXPANSIONS,
            min_seen,
            max_seen,
        });
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let e = eval(mid, reps)?;
        if close(&e) {
            return Ok((mid, e));
        }
        if (e.mean_ats - target).abs() < (best.1.mean_ats - target).abs() {
            best = (mid, e);
        }
        if e.mean_ats < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

/// Chart family whose limits are calibrated through one scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChartFamily {
    /// Search parameter is `h` itself.
    Mewma,
    /// Limits `c · θ0j`; upper charts search `c − 1`, lower charts `−ln c`.
    Pewma(Direction),
}

impl std::fmt::Display for ChartFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChartFamily::Mewma => f.write_str("mewma"),
            ChartFamily::Pewma(d) => write!(f, "pewma-{d}"),
        }
    }
}

impl ChartFamily {
    fn initial_parameter(&self) -> f64 {
        match self {
            ChartFamily::Mewma => 4.0,
            ChartFamily::Pewma(_) => 0.5,
        }
    }

    pub fn limits(&self, model: &GumbelBveParams, x: f64) -> Limits {
        match self {
            ChartFamily::Mewma => Limits::Mewma { h: x },
            ChartFamily::Pewma(direction) => {
                let c = match direction {
                    Direction::Upper => 1.0 + x,
                    Direction::Lower => (-x).exp(),
                };
                Limits::Pewma {
                    direction: *direction,
                    scale: c,
                    limits: [c * model.theta1(), c * model.theta2()],
                }
            }
        }
    }

    pub fn build(&self, model: &GumbelBveParams, lambda: f64, x: f64) -> Result<VectorChartConfig, ChartError> {
        self.chart_for(model, lambda, &self.limits(model, x))
    }

    pub fn chart_for(&self, model: &GumbelBveParams, lambda: f64, limits: &Limits) -> Result<VectorChartConfig, ChartError> {
        Ok(match limits {
            Limits::Mewma { h } => VectorChartConfig::Mewma(MewmaConfig::from_moments(lambda, &moments(model), *h)?),
            Limits::Pewma { direction, limits, .. } => {
                VectorChartConfig::Pewma(PewmaConfig::new(lambda, model.theta(), *direction, *limits)?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Limits {
    Mewma { h: f64 },
    Pewma { direction: Direction, scale: f64, limits: [f64; 2] },
}

impl std::fmt::Display for Limits {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Limits::Mewma { h } => write!(f, "h={h:.4}"),
            Limits::Pewma { direction, limits, .. } => {
                let tag = match direction {
                    Direction::Upper => 'U',
                    Direction::Lower => 'L',
                };
                write!(f, "{tag}1={:.4};{tag}2={:.4}", limits[0], limits[1])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRequest {
    pub model: GumbelBveParams,
    pub family: ChartFamily,
    pub lambda: f64,
    pub target_ats0: f64,
    pub rel_tol: f64,
    pub reps_per_eval: usize,
    pub n_reps: usize,
    pub base_seed: u64,
    pub mode: AtsMode,
    pub options: VectorRunOptions,
}

impl CalibrationRequest {
    fn validate(&self) -> Result<(), SimulationError> {
        if !(self.target_ats0 > 0.0 && self.target_ats0.is_finite()) {
            return Err(SimulationError::InvalidRequest(format!("target ATS must be positive, got {}", self.target_ats0)));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol <= 0.1) {
            return Err(SimulationError::InvalidRequest(format!("rel_tol must lie in (0, 0.1], got {}", self.rel_tol)));
        }
        if self.reps_per_eval == 0 || self.n_reps == 0 {
            return Err(SimulationError::InvalidRequest("replication counts must be positive".into()));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(ChartError::InvalidLambda(self.lambda).into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub limits: Limits,
    pub achieved_ats0: f64,
    /// Estimate at the final limits with `n_reps` runs.
    pub estimate: AtsEstimate,
    /// Number of ATS evaluations.
    pub iterations: usize,
    pub reps_per_eval: usize,
}

/// One in-control model of the comparison study with its shifts and
/// simulation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub model: GumbelBveParams,
    pub lambda: f64,
    pub shifts: Vec<ShiftSpec>,
    pub target_ats0: f64,
    pub n_reps: usize,
    pub reps_per_eval: usize,
    pub rel_tol: f64,
    pub steady_state: SteadyStateConfig,
    pub options: VectorRunOptions,
    pub base_seed: u64,
}

/// The four in-control models of the comparison study, as
/// `(θ01, θ02, δ)`: (1, 2, 1), (1, 2, 0.5), (10, 2, 1), (10, 2, 0.5).
pub fn reference_models() -> Vec<(String, GumbelBveParams)> {
    [(1.0, 2.0, 1.0), (1.0, 2.0, 0.5), (10.0, 2.0, 1.0), (10.0, 2.0, 0.5)]
        .iter()
        .enumerate()
        .map(|(i, &(t1, t2, d))| {
            (
                format!("model{}", i + 1),
                GumbelBveParams::new(t1, t2, d).expect("reference models are valid"),
            )
        })
        .collect()
}

/// Halving and doubling shifts, decreases first.
pub fn reference_shifts() -> Vec<ShiftSpec> {
    [(0.5, 1.0), (1.0, 0.5), (0.5, 0.5), (2.0, 1.0), (1.0, 2.0), (2.0, 2.0)]
        .iter()
        .map(|&(a, b)| ShiftSpec::new(a, b).expect("valid shift"))
        .collect()
}

/// Lower charts for decreases, upper charts for increases. A null shift counts
/// as lower; mixed shifts have no one-sided direction.
pub fn shift_direction(shift: &ShiftSpec) -> Result<Direction, SimulationError> {
    let [a, b] = shift.multipliers();
    if a <= 1.0 && b <= 1.0 {
        Ok(Direction::Lower)
    } else if a >= 1.0 && b >= 1.0 {
        Ok(Direction::Upper)
    } else {
        Err(SimulationError::InvalidRequest(format!(
            "shift ({a}, {b}) mixes a decrease and an increase; one-sided charts need a direction"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mewma,
    Pewma,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Mewma => "MEWMA",
            Method::Pewma => "PEWMA",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub model: String,
    pub shift: ShiftSpec,
    pub direction: Direction,
    pub method: Method,
    pub lambda: f64,
    pub limits: Limits,
    pub estimate: AtsEstimate,
}

impl TableRow {
    fn new(exp: &ExperimentSpec, shift: ShiftSpec, direction: Direction, method: Method, limits: &Limits, estimate: AtsEstimate) -> Self {
        Self {
            model: exp.name.clone(),
            shift,
            direction,
            method,
            lambda: exp.lambda,
            limits: *limits,
            estimate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub model: String,
    pub shift: ShiftSpec,
    pub mewma_ats: f64,
    pub pewma_ats: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table1 {
    pub calibrations: Vec<(String, ChartFamily, CalibrationResult)>,
    pub rows: Vec<TableRow>,
    pub scatter: Vec<ScatterPoint>,
}

pub const TABLE_CSV_HEADER: &str = "model,shift1,shift2,direction,method,lambda,limit_spec,ats,stderr,n_runs,n_discarded,n_censored";
pub const SCATTER_CSV_HEADER: &str = "model,shift_label,mewma_ats,pewma_ats";

impl Table1 {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TABLE_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let [s1, s2] = r.shift.multipliers();
            let se = r.estimate.std_error.map_or(String::new(), |s| format!("{s:.4}"));
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{:.4},{},{},{},{}\n",
                r.model,
                s1,
                s2,
                r.direction,
                r.method,
                r.lambda,
                r.limits,
                r.estimate.mean_ats,
                se,
                r.estimate.n_runs,
                r.estimate.n_discarded,
                r.estimate.n_censored
            ));
        }
        out
    }

    pub fn scatter_csv(&self) -> String {
        let mut out = String::from(SCATTER_CSV_HEADER);
        out.push('\n');
        for p in &self.scatter {
            out.push_str(&format!(
                "{},\"{}\",{:.4},{:.4}\n",
                p.model,
                p.shift.label(),
                p.mewma_ats,
                p.pewma_ats
            ));
        }
        out
    }

    /// `(cells where PEWMA ≤ MEWMA, total out-of-control cells)`.
    pub fn pewma_wins(&self) -> (usize, usize) {
        let wins = self.scatter.iter().filter(|p| p.pewma_ats <= p.mewma_ats).count();
        (wins, self.scatter.len())
    }

    pub fn cell(&self, model: &str, shift: &ShiftSpec) -> Option<&ScatterPoint> {
        self.scatter.iter().find(|p| p.model == model && p.shift == *shift)
    }
}
