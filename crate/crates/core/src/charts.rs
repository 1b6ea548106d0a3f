//! Online control charts for time-between-events data.
//!
//! * [`MewmaConfig`] / [`MewmaState`]: multivariate EWMA on complete vectors,
//!   `z_i = λ(y_i − μ) + (1 − λ) z_{i−1}`, plotted statistic
//!   `E² = (2 − λ)/λ · zᵀ Σ⁻¹ z`, signal when `E² > h`.
//! * [`PewmaConfig`] / [`PewmaState`]: a pair of one-sided univariate EWMA
//!   charts clamped at the in-control means. Upper charts use
//!   `max(θ0j, ·)` and signal above `Uj`; lower charts use `min(θ0j, ·)` and
//!   signal below `Lj`.
//! * [`ShewhartTbeConfig`]: stateless per-stream two-sided threshold test.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model_gumbel::{MomentSummary, TbePair};

/// Determinant threshold below which a covariance matrix is treated as singular.
pub const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChartError {
    #[error("smoothing constant must lie in (0, 1], got {0}")]
    InvalidLambda(f64),
    #[error("covariance matrix is not symmetric positive definite (det = {det:.3e})")]
    SingularCovariance { det: f64 },
    #[error("control limit must be positive and finite, got {0}")]
    InvalidLimit(f64),
    #[error("in-control mean must be positive and finite, got {0}")]
    InvalidMean(f64),
    #[error("{direction} limit {limit} for stream {stream} is on the wrong side of the in-control mean {theta0}")]
    LimitSide {
        direction: Direction,
        stream: usize,
        limit: f64,
        theta0: f64,
    },
    #[error("stream {stream}: need 0 <= lower < upper, got ({lower}, {upper})")]
    InvalidThresholds { stream: usize, lower: f64, upper: f64 },
    #[error("unknown stream index {index} (chart has {streams} streams)")]
    UnknownStream { index: usize, streams: usize },
    #[error("observation must be nonnegative and finite, got {0}")]
    InvalidObservation(f64),
}

/// Outcome of feeding one observation to a chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub signaled: bool,
    /// Univariate statistic that crossed its limit. Always `None` for MEWMA.
    pub source: Option<usize>,
    pub statistic: f64,
}

impl Decision {
    fn quiet(statistic: f64) -> Self {
        Self {
            signaled: false,
            source: None,
            statistic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Upper,
    Lower,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::Upper => "upper",
            Direction::Lower => "lower",
        })
    }
}

fn check_lambda(lambda: f64) -> Result<(), ChartError> {
    if lambda > 0.0 && lambda <= 1.0 {
        Ok(())
    } else {
        Err(ChartError::InvalidLambda(lambda))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MewmaConfig {
    lambda: f64,
    mean: [f64; 2],
    covariance: [[f64; 2]; 2],
    limit_h: f64,
    inverse: [[f64; 2]; 2],
    scale: f64,
}

impl MewmaConfig {
    pub fn new(
        lambda: f64,
        mean: [f64; 2],
        covariance: [[f64; 2]; 2],
        limit_h: f64,
    ) -> Result<Self, ChartError> {
        check_lambda(lambda)?;
        if !(limit_h > 0.0) || limit_h.is_nan() {
            return Err(ChartError::InvalidLimit(limit_h));
        }
        let [[a, b], [c, d]] = covariance;
        let det = a * d - b * c;
        if b != c || a <= 0.0 || !(det > SINGULAR_TOL) || !det.is_finite() {
            return Err(ChartError::SingularCovariance { det });
        }
        let inverse = [[d / det, -b / det], [-c / det, a / det]];
        Ok(Self {
            lambda,
            mean,
            covariance,
            limit_h,
            inverse,
            scale: (2.0 - lambda) / lambda,
        })
    }

    pub fn from_moments(lambda: f64, moments: &MomentSummary, limit_h: f64) -> Result<Self, ChartError> {
        Self::new(lambda, moments.mean, moments.covariance, limit_h)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn limit_h(&self) -> f64 {
        self.limit_h
    }

    pub fn mean(&self) -> [f64; 2] {
        self.mean
    }

    pub fn covariance(&self) -> [[f64; 2]; 2] {
        self.covariance
    }

    pub fn with_limit(&self, limit_h: f64) -> Result<Self, ChartError> {
        Self::new(self.lambda, self.mean, self.covariance, limit_h)
    }

    pub fn init(&self) -> MewmaState {
        MewmaState::default()
    }

    /// `xᵀ Σ⁻¹ x`.
    pub fn quadratic_form(&self, x: [f64; 2]) -> f64 {
        let m = &self.inverse;
        x[0] * (m[0][0] * x[0] + m[0][1] * x[1]) + x[1] * (m[1][0] * x[0] + m[1][1] * x[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MewmaState {
    pub z: [f64; 2],
    pub last_stat: f64,
    pub samples_seen: u64,
}

impl MewmaState {
    pub fn update(&mut self, config: &MewmaConfig, y: TbePair) -> Decision {
        let lam = config.lambda;
        let keep = 1.0 - lam;
        self.z = [
            lam * (y.y1 - config.mean[0]) + keep * self.z[0],
            lam * (y.y2 - config.mean[1]) + keep * self.z[1],
        ];
        // The quadratic form of an SPD matrix is nonnegative; clamp rounding.
        let stat = (config.scale * config.quadratic_form(self.z)).max(0.0);
        self.last_stat = stat;
        self.samples_seen += 1;
        Decision {
            signaled: stat > config.limit_h,
            source: None,
            statistic: stat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PewmaConfig {
    lambda: f64,
    theta0: [f64; 2],
    direction: Direction,
    limits: [f64; 2],
}

impl PewmaConfig {
    pub fn new(
        lambda: f64,
        theta0: [f64; 2],
        direction: Direction,
        limits: [f64; 2],
    ) -> Result<Self, ChartError> {
        check_lambda(lambda)?;
        for (stream, (&t, &l)) in theta0.iter().zip(limits.iter()).enumerate() {
            if !(t.is_finite() && t > 0.0) {
                return Err(ChartError::InvalidMean(t));
            }
            if !(l.is_finite() && l > 0.0) {
                return Err(ChartError::InvalidLimit(l));
            }
            let ok = match direction {
                Direction::Upper => l > t,
                Direction::Lower => l < t,
            };
            if !ok {
                return Err(ChartError::LimitSide {
                    direction,
                    stream,
                    limit: l,
                    theta0: t,
                });
            }
        }
        Ok(Self {
            lambda,
            theta0,
            direction,
            limits,
        })
    }

    /// Limits proportional to the in-control means: `limit_j = c · θ0j`.
    pub fn proportional(lambda: f64, theta0: [f64; 2], direction: Direction, c: f64) -> Result<Self, ChartError> {
        Self::new(lambda, theta0, direction, [c * theta0[0], c * theta0[1]])
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn theta0(&self) -> [f64; 2] {
        self.theta0
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn limits(&self) -> [f64; 2] {
        self.limits
    }

    pub fn init(&self) -> PewmaState {
        PewmaState {
            z: self.theta0,
            samples_seen: 0,
        }
    }

    #[inline]
    fn crosses(&self, stream: usize, z: f64) -> bool {
        match self.direction {
            Direction::Upper => z > self.limits[stream],
            Direction::Lower => z < self.limits[stream],
        }
    }

    // How far along the way to its limit a statistic is, 0 at θ0 and 1 at the limit.
    fn progress(&self, stream: usize, z: f64) -> f64 {
        (z - self.theta0[stream]) / (self.limits[stream] - self.theta0[stream])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PewmaState {
    pub z: [f64; 2],
    pub samples_seen: u64,
}

impl PewmaState {
    /// Update a single component chart. Returns whether it crossed its limit.
    #[inline]
    pub fn update_stream(&mut self, config: &PewmaConfig, stream: usize, y: f64) -> bool {
        // Same as λy + (1 − λ)z, but exact at the fixed point y = z.
        let raw = self.z[stream] + config.lambda * (y - self.z[stream]);
        let t0 = config.theta0[stream];
        let z = match config.direction {
            Direction::Upper => raw.max(t0),
            Direction::Lower => raw.min(t0),
        };
        self.z[stream] = z;
        config.crosses(stream, z)
    }

    /// Update both component charts with one observation pair. Signals if
    /// either component crosses; the source is the lowest signalling index.
    pub fn update(&mut self, config: &PewmaConfig, y: TbePair) -> Decision {
        let s1 = self.update_stream(config, 0, y.y1);
        let s2 = self.update_stream(config, 1, y.y2);
        self.samples_seen += 1;
        let source = if s1 {
            Some(0)
        } else if s2 {
            Some(1)
        } else {
            None
        };
        match source {
            Some(j) => Decision {
                signaled: true,
                source: Some(j),
                statistic: self.z[j],
            },
            None => {
                let j = if config.progress(0, self.z[0]) >= config.progress(1, self.z[1]) {
                    0
                } else {
                    1
                };
                Decision::quiet(self.z[j])
            }
        }
    }
}

/// Per-stream lower and upper thresholds on individual times-between-events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct ShewhartTbeConfig {
    limits: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for ShewhartTbeConfig {
    type Error = ChartError;
    fn try_from(v: Vec<(f64, f64)>) -> Result<Self, ChartError> {
        Self::new(v)
    }
}

impl From<ShewhartTbeConfig> for Vec<(f64, f64)> {
    fn from(c: ShewhartTbeConfig) -> Self {
        c.limits
    }
}

impl ShewhartTbeConfig {
    /// `limits[j] = (h_jL, h_jU)`; `h_jU` may be infinite.
    pub fn new(limits: Vec<(f64, f64)>) -> Result<Self, ChartError> {
        for (stream, &(lower, upper)) in limits.iter().enumerate() {
            if !(lower >= 0.0 && lower < upper) || lower.is_infinite() {
                return Err(ChartError::InvalidThresholds { stream, lower, upper });
            }
        }
        Ok(Self { limits })
    }

    pub fn streams(&self) -> usize {
        self.limits.len()
    }

    pub fn limits(&self) -> &[(f64, f64)] {
        &self.limits
    }

    pub fn check(&self, stream: usize, y: f64) -> Result<Decision, ChartError> {
        let &(lower, upper) = self.limits.get(stream).ok_or(ChartError::UnknownStream {
            index: stream,
            streams: self.limits.len(),
        })?;
        if !(y >= 0.0 && y.is_finite()) {
            return Err(ChartError::InvalidObservation(y));
        }
        let signaled = y > upper || y < lower;
        Ok(Decision {
            signaled,
            source: signaled.then_some(stream),
            statistic: y,
        })
    }

    #[inline]
    pub(crate) fn signals_unchecked(&self, stream: usize, y: f64) -> bool {
        let (lower, upper) = self.limits[stream];
        y > upper || y < lower
    }
}

/// A chart that consumes bivariate observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VectorChartConfig {
    Mewma(MewmaConfig),
    Pewma(PewmaConfig),
}

impl VectorChartConfig {
    pub fn lambda(&self) -> f64 {
        match self {
            VectorChartConfig::Mewma(c) => c.lambda(),
            VectorChartConfig::Pewma(c) => c.lambda(),
        }
    }
}
