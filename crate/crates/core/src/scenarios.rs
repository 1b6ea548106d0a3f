//! Monitoring runs for the two multivariate TBE data scenarios, and replay
//! of recorded event logs.
//!
//! In the vector scenario items are observed one after another; item `i`
//! starts when item `i − 1` is complete and is complete after
//! `T_i = max_j Y_ij`. A vector chart can only plot once the item is
//! complete, so a MEWMA alarm at item `i_A` happens at `t_A = Σ_{i ≤ i_A} T_i`.
//! The paired univariate charts see each component when it arrives, at
//! `Σ_{i < i_A} T_i + Y_{i_A j}`.
//!
//! In the point-process scenario every stream is an independent exponential
//! renewal process on a shared clock, each inter-event time is tested by a
//! per-stream Shewhart chart on arrival, and the alarm is the earliest
//! signalling epoch across streams.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charts::{ChartError, Decision, MewmaState, PewmaConfig, PewmaState, ShewhartTbeConfig, VectorChartConfig};
use crate::model_gumbel::{sample_pair, GumbelBveParams, ModelError, TbePair};

pub const DEFAULT_VECTOR_CAP: u64 = 1_000_000;
pub const DEFAULT_TIME_CAP: f64 = 1_000_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("shift multipliers must be positive and finite, got ({0}, {1})")]
    InvalidShift(f64, f64),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("{0} charts cannot be replayed in {1} mode")]
    UnsupportedReplay(&'static str, &'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Chart(#[from] ChartError),
}

/// Multiplicative shift of the mean times-between-events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct ShiftSpec {
    multiplier1: f64,
    multiplier2: f64,
}

impl TryFrom<[f64; 2]> for ShiftSpec {
    type Error = ScenarioError;
    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1])
    }
}

impl From<ShiftSpec> for [f64; 2] {
    fn from(s: ShiftSpec) -> Self {
        [s.multiplier1, s.multiplier2]
    }
}

impl ShiftSpec {
    pub const NULL: ShiftSpec = ShiftSpec {
        multiplier1: 1.0,
        multiplier2: 1.0,
    };

    pub fn new(multiplier1: f64, multiplier2: f64) -> Result<Self, ScenarioError> {
        if !(multiplier1 > 0.0 && multiplier2 > 0.0 && multiplier1.is_finite() && multiplier2.is_finite()) {
            return Err(ScenarioError::InvalidShift(multiplier1, multiplier2));
        }
        Ok(Self {
            multiplier1,
            multiplier2,
        })
    }

    pub fn multipliers(&self) -> [f64; 2] {
        [self.multiplier1, self.multiplier2]
    }

    pub fn is_null(&self) -> bool {
        self.multiplier1 == 1.0 && self.multiplier2 == 1.0
    }

    pub fn apply(&self, params: &GumbelBveParams) -> GumbelBveParams {
        params
            .scaled(self.multiplier1, self.multiplier2)
            .expect("positive multipliers keep parameters valid")
    }

    /// Label in the style `0.5θ1,θ2`.
    pub fn label(&self) -> String {
        fn part(m: f64, j: usize) -> String {
            if m == 1.0 {
                format!("θ{j}")
            } else {
                format!("{m}θ{j}")
            }
        }
        format!("{},{}", part(self.multiplier1, 1), part(self.multiplier2, 2))
    }
}

/// Vector-based scenario. Items `1..=v` follow the in-control model, later
/// items the shifted one. `change_sample = None` means no change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorScenario {
    pub in_control: GumbelBveParams,
    pub shift: ShiftSpec,
    pub change_sample: Option<u64>,
}

impl VectorScenario {
    pub fn in_control(params: GumbelBveParams) -> Self {
        Self {
            in_control: params,
            shift: ShiftSpec::NULL,
            change_sample: None,
        }
    }
}

/// When the paired univariate charts act on a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PewmaTiming {
    /// At the component's own event time (no waiting for the full vector).
    #[default]
    ComponentArrival,
    /// Only once the vector is complete, like the multivariate chart.
    VectorCompletion,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorRunOptions {
    pub cap: u64,
    pub pewma_timing: PewmaTiming,
    /// Restart the chart after a signal before the change instead of ending
    /// the run there.
    pub restart_before_change: bool,
}

impl Default for VectorRunOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_VECTOR_CAP,
            pewma_timing: PewmaTiming::default(),
            restart_before_change: false,
        }
    }
}

/// Independent exponential renewal streams; stream `j` has mean
/// `theta0[j]` before `change_time` and `theta0[j] · multipliers[j]` after.
#[derive(Debug, Clone, PartialEq)]
pub struct PointProcessScenario {
    theta0: Vec<f64>,
    multipliers: Vec<f64>,
    change_time: Option<f64>,
}

impl PointProcessScenario {
    pub fn new(theta0: Vec<f64>, multipliers: Vec<f64>, change_time: Option<f64>) -> Result<Self, ScenarioError> {
        if theta0.is_empty() || theta0.len() != multipliers.len() {
            return Err(ScenarioError::InvalidScenario(
                "need one multiplier per stream and at least one stream".into(),
            ));
        }
        if theta0.iter().chain(&multipliers).any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(ScenarioError::InvalidScenario(
                "stream means and multipliers must be positive".into(),
            ));
        }
        if let Some(tau) = change_time {
            if !(tau >= 0.0) {
                return Err(ScenarioError::InvalidScenario(format!("change time must be >= 0, got {tau}")));
            }
        }
        Ok(Self {
            theta0,
            multipliers,
            change_time,
        })
    }

    pub fn streams(&self) -> usize {
        self.theta0.len()
    }

    pub fn theta0(&self) -> &[f64] {
        &self.theta0
    }

    pub fn change_time(&self) -> Option<f64> {
        self.change_time
    }

    pub fn with_change_time(&self, change_time: Option<f64>) -> Self {
        Self {
            change_time,
            ..self.clone()
        }
    }
}

/// One simulated monitoring run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOutcome {
    pub signaled: bool,
    /// Signalling item (vector) or event index within the signalling stream.
    pub i_a: u64,
    /// Elapsed time at the signal, or at the cap for censored runs.
    pub t_a: f64,
    /// Time of the change; `None` when the run never changes.
    pub change_time: Option<f64>,
    /// `t_a − change_time` for runs that signal after the change.
    pub time_from_change: Option<f64>,
    pub source: Option<usize>,
    pub censored: bool,
    /// Signalled before the change took place.
    pub false_alarm: bool,
}

/// Time until a vector is complete.
#[inline]
pub fn vector_completion_time(y: TbePair) -> f64 {
    y.y1.max(y.y2)
}

enum LiveChart<'a> {
    Mewma(&'a crate::charts::MewmaConfig, MewmaState),
    Pewma(&'a PewmaConfig, PewmaState),
}

impl<'a> LiveChart<'a> {
    fn new(config: &'a VectorChartConfig) -> Self {
        match config {
            VectorChartConfig::Mewma(c) => LiveChart::Mewma(c, c.init()),
            VectorChartConfig::Pewma(c) => LiveChart::Pewma(c, c.init()),
        }
    }

    /// Feed one item that starts at `start`. Returns the alarm time and decision.
    #[inline]
    fn feed(&mut self, y: TbePair, start: f64, timing: PewmaTiming) -> Option<(f64, Decision)> {
        let complete = start + vector_completion_time(y);
        match self {
            LiveChart::Mewma(cfg, st) => {
                let d = st.update(cfg, y);
                d.signaled.then_some((complete, d))
            }
            LiveChart::Pewma(cfg, st) => match timing {
                PewmaTiming::VectorCompletion => {
                    let d = st.update(cfg, y);
                    d.signaled.then_some((complete, d))
                }
                PewmaTiming::ComponentArrival => {
                    // Components are processed in arrival order; ties by index.
                    let order = if y.y2 < y.y1 { [1, 0] } else { [0, 1] };
                    let ys = y.as_array();
                    let mut alarm = None;
                    for j in order {
                        if st.update_stream(cfg, j, ys[j]) && alarm.is_none() {
                            let d = Decision {
                                signaled: true,
                                source: Some(j),
                                statistic: st.z[j],
                            };
                            alarm = Some((start + ys[j], d));
                        }
                    }
                    st.samples_seen += 1;
                    alarm
                }
            },
        }
    }
}

/// Simulate one vector-scenario run until the first signal or `options.cap`
/// items.
pub fn run_vector_scenario<R: Rng + ?Sized>(
    scenario: &VectorScenario,
    chart: &VectorChartConfig,
    options: &VectorRunOptions,
    rng: &mut R,
) -> RunOutcome {
    let shifted = scenario.shift.apply(&scenario.in_control);
    let v = scenario.change_sample.unwrap_or(u64::MAX);
    let mut live = LiveChart::new(chart);
    let mut elapsed = 0.0;
    let mut change_time = if v == 0 { Some(0.0) } else { None };
    for i in 1..=options.cap.max(1) {
        let params = if i <= v { &scenario.in_control } else { &shifted };
        let y = sample_pair(params, rng);
        let start = elapsed;
        elapsed += vector_completion_time(y);
        if let Some((t_a, d)) = live.feed(y, start, options.pewma_timing) {
            let false_alarm = i <= v && scenario.change_sample.is_some();
            if false_alarm && options.restart_before_change {
                live = LiveChart::new(chart);
                if i == v {
                    change_time = Some(elapsed);
                }
                continue;
            }
            return RunOutcome {
                signaled: true,
                i_a: i,
                t_a,
                change_time,
                time_from_change: change_time.filter(|_| !false_alarm).map(|c| t_a - c),
                source: d.source,
                censored: false,
                false_alarm,
            };
        }
        if i == v {
            change_time = Some(elapsed);
        }
    }
    RunOutcome {
        signaled: false,
        i_a: options.cap.max(1),
        t_a: elapsed,
        change_time,
        time_from_change: None,
        source: None,
        censored: true,
        false_alarm: false,
    }
}

/// Simulate one point-process run until the earliest signal or `cap` time
/// units.
///
/// The interval spanning the change time is the elapsed part plus a fresh
/// residual at the shifted rate, which is exact for exponential streams.
pub fn run_point_process_scenario<R: Rng + ?Sized>(
    scenario: &PointProcessScenario,
    charts: &ShewhartTbeConfig,
    cap: f64,
    rng: &mut R,
) -> Result<RunOutcome, ScenarioError> {
    if charts.streams() != scenario.streams() {
        return Err(ScenarioError::InvalidScenario(format!(
            "{} streams but {} chart limits",
            scenario.streams(),
            charts.streams()
        )));
    }
    if !(cap > 0.0) {
        return Err(ScenarioError::InvalidScenario(format!("cap must be positive, got {cap}")));
    }
    let tau = scenario.change_time.unwrap_or(f64::INFINITY);
    // (time, event index, stream) of the earliest signal so far.
    let mut best: Option<(f64, u64, usize)> = None;
    for j in 0..scenario.streams() {
        let before = scenario.theta0[j];
        let after = before * scenario.multipliers[j];
        let horizon = best.map_or(cap, |b| b.0.min(cap));
        let mut t = 0.0;
        let mut k = 0u64;
        loop {
            let mean = if t < tau { before } else { after };
            let e: f64 = Exp1.sample(rng);
            let mut y = mean * e;
            if t < tau && t + y > tau {
                let r: f64 = Exp1.sample(rng);
                y = (tau - t) + after * r;
            }
            t += y;
            k += 1;
            if t > horizon {
                break;
            }
            if charts.signals_unchecked(j, y) {
                best = Some((t, k, j));
                break;
            }
        }
    }
    let change_time = scenario.change_time;
    Ok(match best {
        Some((t_a, i_a, j)) => {
            let false_alarm = t_a <= tau && change_time.is_some();
            RunOutcome {
                signaled: true,
                i_a,
                t_a,
                change_time,
                time_from_change: change_time.filter(|_| !false_alarm).map(|c| t_a - c),
                source: Some(j),
                censored: false,
                false_alarm,
            }
        }
        None => RunOutcome {
            signaled: false,
            i_a: 0,
            t_a: cap,
            change_time,
            time_from_change: None,
            source: None,
            censored: true,
            false_alarm: false,
        },
    })
}

/// A recorded event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub timestamp: f64,
    pub stream: usize,
    /// 1-based source line, for error reporting.
    pub line: usize,
}

/// Parse the `timestamp,stream_id` event-log format. Blank lines and lines
/// starting with `#` are skipped. Stream ids are mapped to their position in
/// `streams`.
pub fn parse_event_log(text: &str, streams: &[String]) -> Result<Vec<Event>, ScenarioError> {
    let mut events = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let malformed = |message: String| ScenarioError::Malformed { line, message };
        let (ts, id) = trimmed
            .split_once(',')
            .ok_or_else(|| malformed(format!("expected `timestamp,stream_id`, got `{trimmed}`")))?;
        let timestamp: f64 = ts
            .trim()
            .parse()
            .map_err(|_| malformed(format!("bad timestamp `{}`", ts.trim())))?;
        if !timestamp.is_finite() || timestamp < 0.0 {
            return Err(malformed(format!("timestamp must be finite and nonnegative, got {timestamp}")));
        }
        if timestamp < last {
            return Err(malformed(format!("timestamp {timestamp} is earlier than the previous {last}")));
        }
        let id = id.trim();
        let stream = streams
            .iter()
            .position(|s| s == id)
            .ok_or_else(|| malformed(format!("unknown stream id `{id}`")))?;
        last = timestamp;
        events.push(Event { timestamp, stream, line });
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    PerStream,
    VectorAssembly,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplayChart {
    Shewhart(ShewhartTbeConfig),
    Vector(VectorChartConfig),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alarm {
    pub time: f64,
    pub source: Option<usize>,
    pub statistic: f64,
    /// 1-based count of observations fed to the chart when it signalled.
    pub observation: u64,
}

/// Replay an ordered event log through a chart. After an alarm the chart is
/// restarted from its initial state.
///
/// Per-stream mode feeds each stream's successive inter-event times (the
/// first measured from time 0). Vector-assembly mode fills one slot per
/// stream and hands the completed pair to the chart at the last arrival; a
/// second event for an already filled slot is queued for the next vector.
/// Components are measured from the completion of the previous vector, or
/// from the stream's previous event for queued events that predate it.
pub fn replay_event_log(
    log: &[Event],
    chart: &ReplayChart,
    grouping: Grouping,
    streams: usize,
) -> Result<Vec<Alarm>, ScenarioError> {
    for w in log.windows(2) {
        if w[1].timestamp < w[0].timestamp {
            return Err(ScenarioError::Malformed {
                line: w[1].line,
                message: "timestamps must be nondecreasing".into(),
            });
        }
    }
    if let Some(e) = log.iter().find(|e| e.stream >= streams) {
        return Err(ScenarioError::Malformed {
            line: e.line,
            message: format!("stream index {} outside the declared {streams} streams", e.stream),
        });
    }
    match grouping {
        Grouping::PerStream => replay_per_stream(log, chart, streams),
        Grouping::VectorAssembly => replay_vectors(log, chart, streams),
    }
}

fn replay_per_stream(log: &[Event], chart: &ReplayChart, streams: usize) -> Result<Vec<Alarm>, ScenarioError> {
    let mut prev = vec![0.0; streams];
    let mut alarms = Vec::new();
    let mut fed = 0u64;
    match chart {
        ReplayChart::Shewhart(cfg) => {
            for e in log {
                let y = e.timestamp - prev[e.stream];
                prev[e.stream] = e.timestamp;
                fed += 1;
                let d = cfg.check(e.stream, y)?;
                if d.signaled {
                    alarms.push(alarm(e.timestamp, d, fed));
                    fed = 0;
                }
            }
        }
        ReplayChart::Vector(VectorChartConfig::Pewma(cfg)) => {
            if streams != 2 {
                return Err(ScenarioError::UnsupportedReplay("paired EWMA", "per-stream with other than two streams"));
            }
            let mut st = cfg.init();
            for e in log {
                let y = e.timestamp - prev[e.stream];
                prev[e.stream] = e.timestamp;
                fed += 1;
                if st.update_stream(cfg, e.stream, y) {
                    let d = Decision {
                        signaled: true,
                        source: Some(e.stream),
                        statistic: st.z[e.stream],
                    };
                    alarms.push(alarm(e.timestamp, d, fed));
                    st = cfg.init();
                    fed = 0;
                }
            }
        }
        ReplayChart::Vector(VectorChartConfig::Mewma(_)) => {
            return Err(ScenarioError::UnsupportedReplay("MEWMA", "per-stream"));
        }
    }
    Ok(alarms)
}

fn alarm(time: f64, d: Decision, observation: u64) -> Alarm {
    Alarm {
        time,
        source: d.source,
        statistic: d.statistic,
        observation,
    }
}

fn replay_vectors(log: &[Event], chart: &ReplayChart, streams: usize) -> Result<Vec<Alarm>, ScenarioError> {
    let vector_chart = match chart {
        ReplayChart::Vector(c) => c,
        ReplayChart::Shewhart(_) => return Err(ScenarioError::UnsupportedReplay("Shewhart", "vector-assembly")),
    };
    if streams != 2 {
        return Err(ScenarioError::UnsupportedReplay("bivariate", "vector-assembly with other than two streams"));
    }
    let mut alarms = Vec::new();
    let mut live = LiveChart::new(vector_chart);
    let mut fed = 0u64;
    let mut start = 0.0;
    let mut last_event = [0.0f64; 2];
    // Slots of the vector being assembled; later vectors queue behind it.
    let mut pending: std::collections::VecDeque<[Option<f64>; 2]> = std::collections::VecDeque::new();
    for e in log {
        let anchor = if e.timestamp >= start {
            start.max(last_event[e.stream])
        } else {
            last_event[e.stream]
        };
        let y = e.timestamp - anchor;
        last_event[e.stream] = e.timestamp;
        match pending.iter_mut().find(|slots| slots[e.stream].is_none()) {
            Some(slots) => slots[e.stream] = Some(y),
            None => {
                let mut slots = [None, None];
                slots[e.stream] = Some(y);
                pending.push_back(slots);
            }
        }
        // Only the head vector can complete; its completion time is now.
        while let Some(&[Some(y1), Some(y2)]) = pending.front() {
            pending.pop_front();
            fed += 1;
            let pair = TbePair { y1, y2 };
            let hit = live.feed(pair, start, PewmaTiming::ComponentArrival).map(|(time, d)| match vector_chart {
                VectorChartConfig::Mewma(_) => (e.timestamp, d),
                VectorChartConfig::Pewma(_) => (time.min(e.timestamp), d),
            });
            start = e.timestamp;
            if let Some((time, d)) = hit {
                alarms.push(alarm(time, d, fed));
                live = LiveChart::new(vector_chart);
                fed = 0;
            }
        }
    }
    Ok(alarms)
}
