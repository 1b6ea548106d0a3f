//! Gumbel's bivariate exponential distribution.
//!
//! Joint survival function
//!
//! ```text
//! S(y1, y2) = exp(-[(y1/θ1)^(1/δ) + (y2/θ2)^(1/δ)]^δ),   0 < δ ≤ 1
//! ```
//!
//! Both marginals are exponential with means `θ1`, `θ2`; `δ = 1` is
//! independence and smaller `δ` means stronger positive dependence
//! (Kendall's tau is `1 - δ`).
//!
//! Sampling uses the positive-stable frailty representation: with `S`
//! positive stable of index `δ` (Laplace transform `exp(-t^δ)`) and
//! independent unit exponentials `E1, E2`, the pair
//! `Yj = θj (Ej / S)^δ` has exactly the survival function above.

use rand::Rng;
use rand::distr::Open01;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{self, QuadratureError};

/// Smallest supported dependence parameter. Below this `(y/θ)^(1/δ)` loses
/// all precision for ordinary inputs.
pub const MIN_DELTA: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("scale parameter {name} must be positive and finite, got {value}")]
    InvalidScale { name: &'static str, value: f64 },
    #[error("dependence parameter must lie in [{MIN_DELTA}, 1], got {0}")]
    InvalidDelta(f64),
    #[error("positive-stable index must lie in (0, 1), got {0}")]
    InvalidStableIndex(f64),
    #[error("time-between-events must be nonnegative and finite, got ({0}, {1})")]
    InvalidPair(f64, f64),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Parameters of the Gumbel bivariate exponential model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct GumbelBveParams {
    theta1: f64,
    theta2: f64,
    delta: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    theta1: f64,
    theta2: f64,
    delta: f64,
}

impl TryFrom<RawParams> for GumbelBveParams {
    type Error = ModelError;
    fn try_from(r: RawParams) -> Result<Self, Self::Error> {
        Self::new(r.theta1, r.theta2, r.delta)
    }
}

impl From<GumbelBveParams> for RawParams {
    fn from(p: GumbelBveParams) -> Self {
        RawParams {
            theta1: p.theta1,
            theta2: p.theta2,
            delta: p.delta,
        }
    }
}

impl GumbelBveParams {
    pub fn new(theta1: f64, theta2: f64, delta: f64) -> Result<Self, ModelError> {
        for (name, value) in [("theta1", theta1), ("theta2", theta2)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::InvalidScale { name, value });
            }
        }
        if !(MIN_DELTA..=1.0).contains(&delta) {
            return Err(ModelError::InvalidDelta(delta));
        }
        Ok(Self {
            theta1,
            theta2,
            delta,
        })
    }

    pub fn theta1(&self) -> f64 {
        self.theta1
    }

    pub fn theta2(&self) -> f64 {
        self.theta2
    }

    pub fn theta(&self) -> [f64; 2] {
        [self.theta1, self.theta2]
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_independent(&self) -> bool {
        self.delta == 1.0
    }

    /// Same dependence, scales multiplied component-wise.
    pub fn scaled(&self, m1: f64, m2: f64) -> Result<Self, ModelError> {
        Self::new(self.theta1 * m1, self.theta2 * m2, self.delta)
    }
}

/// One bivariate observation of times-between-events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TbePair {
    pub y1: f64,
    pub y2: f64,
}

impl TbePair {
    pub fn new(y1: f64, y2: f64) -> Result<Self, ModelError> {
        if !(y1.is_finite() && y2.is_finite() && y1 >= 0.0 && y2 >= 0.0) {
            return Err(ModelError::InvalidPair(y1, y2));
        }
        Ok(Self { y1, y2 })
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.y1, self.y2]
    }
}

/// Mean vector and covariance matrix of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSummary {
    pub mean: [f64; 2],
    pub covariance: [[f64; 2]; 2],
}

impl MomentSummary {
    pub fn correlation(&self) -> f64 {
        self.covariance[0][1] / (self.covariance[0][0] * self.covariance[1][1]).sqrt()
    }
}

/// Joint survival probability `P(Y1 > y1, Y2 > y2)`.
///
/// Evaluated as `m (1 + r^(1/δ))^δ` with `m` the larger scaled coordinate
/// and `r ≤ 1` the ratio, so the power never overflows.
pub fn survival(params: &GumbelBveParams, y: TbePair) -> f64 {
    let a = y.y1 / params.theta1;
    let b = y.y2 / params.theta2;
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == 0.0 {
        return 1.0;
    }
    if lo == 0.0 || params.delta == 1.0 {
        return (-(hi + lo)).exp();
    }
    let r = (lo / hi).powf(1.0 / params.delta);
    (-(hi * (1.0 + r).powf(params.delta))).exp()
}

/// Draw from the positive stable law with Laplace transform `exp(-t^δ)`,
/// `0 < δ < 1`, by Kanter's representation.
pub fn sample_positive_stable<R: Rng + ?Sized>(delta: f64, rng: &mut R) -> Result<f64, ModelError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ModelError::InvalidStableIndex(delta));
    }
    Ok(ln_positive_stable(delta, rng).exp())
}

// Log of a positive stable draw:
// S = sin(δU) / sin(U)^(1/δ) * (sin((1-δ)U) / W)^((1-δ)/δ)
// with U uniform on (0, π) and W unit exponential. Computed in logs since
// the individual factors underflow near U = 0 for small δ.
#[inline]
fn ln_positive_stable<R: Rng + ?Sized>(delta: f64, rng: &mut R) -> f64 {
    let unit: f64 = Open01.sample(rng);
    let u = std::f64::consts::PI * unit;
    let w: f64 = Exp1.sample(rng);
    let one_minus = 1.0 - delta;
    (delta * u).sin().ln() - u.sin().ln() / delta
        + (one_minus / delta) * ((one_minus * u).sin().ln() - w.ln())
}

/// Draw one pair from the model.
#[inline]
pub fn sample_pair<R: Rng + ?Sized>(params: &GumbelBveParams, rng: &mut R) -> TbePair {
    if params.delta == 1.0 {
        let e1: f64 = Exp1.sample(rng);
        let e2: f64 = Exp1.sample(rng);
        return TbePair {
            y1: params.theta1 * e1,
            y2: params.theta2 * e2,
        };
    }
    let ln_s = ln_positive_stable(params.delta, rng);
    let e1: f64 = Exp1.sample(rng);
    let e2: f64 = Exp1.sample(rng);
    TbePair {
        y1: params.theta1 * (params.delta * (e1.ln() - ln_s)).exp(),
        y2: params.theta2 * (params.delta * (e2.ln() - ln_s)).exp(),
    }
}

/// Closed-form moments. The cross moment is
/// `E[Y1 Y2] = θ1 θ2 δ Γ(δ)² / Γ(2δ)`.
pub fn moments(params: &GumbelBveParams) -> MomentSummary {
    let (t1, t2, d) = (params.theta1, params.theta2, params.delta);
    let off = if d == 1.0 {
        0.0
    } else {
        let g = libm::tgamma(d);
        t1 * t2 * (d * g * g / libm::tgamma(2.0 * d) - 1.0)
    };
    MomentSummary {
        mean: [t1, t2],
        covariance: [[t1 * t1, off], [off, t2 * t2]],
    }
}

/// Covariance of `(Y1, Y2)` by direct quadrature of
/// `E[Y1 Y2] = ∬ S(y1, y2) dy1 dy2`, independent of [`moments`].
///
/// The domain is truncated to `[0, cθ1] × [0, cθ2]`. Since
/// `S ≤ exp(-max(y1/θ1, y2/θ2))`, the discarded mass is at most
/// `2 θ1 θ2 (c + 2) e^(-c)`; `c` is chosen so this stays below `tol / 10`.
pub fn numeric_cov_oracle(params: &GumbelBveParams, tol: f64) -> Result<f64, ModelError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(ModelError::InvalidTolerance(tol));
    }
    let scale = params.theta1 * params.theta2;
    let tail = |c: f64| 2.0 * scale * (c + 2.0) * (-c).exp();
    let mut c = 1.0;
    while tail(c) >= tol / 10.0 {
        c += 1.0;
    }
    let quad_tol = 0.9 * tol;
    let cross = quadrature::integrate_2d(
        |y1, y2| survival(params, TbePair { y1, y2 }),
        (0.0, c * params.theta1),
        (0.0, c * params.theta2),
        quad_tol,
        2000,
    )?;
    Ok(cross.value - scale)
}
