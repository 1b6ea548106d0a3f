//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals, plus a
//! nested 2-D rule on rectangles.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for XGK[1], XGK[3], XGK[5] and the centre node.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature did not converge: error estimate {estimate:.3e} > tolerance {tol:.3e} after {intervals} intervals")]
    NotConverged {
        estimate: f64,
        tol: f64,
        intervals: usize,
    },
    #[error("invalid integration bounds [{0}, {1}]")]
    InvalidBounds(f64, f64),
}

/// An integral value with its absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Integral {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(centre - dx) + f(centre + dx);
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    Integral {
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

struct Segment {
    a: f64,
    b: f64,
    est: Integral,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.est.error == other.est.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.est.error.total_cmp(&other.est.error)
    }
}

/// Globally adaptive integration of `f` on `[a, b]` to absolute tolerance
/// `tol`. The interval with the largest error estimate is bisected until the
/// summed estimate drops below `tol` or `max_intervals` is reached.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_intervals: usize,
) -> Result<Integral, QuadratureError> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(QuadratureError::InvalidBounds(a, b));
    }
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
        });
    }
    let first = kronrod15(&mut f, a, b);
    let mut total = first;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, est: first });

    while total.error > tol {
        if heap.len() >= max_intervals {
            return Err(QuadratureError::NotConverged {
                estimate: total.error,
                tol,
                intervals: heap.len(),
            });
        }
        let seg = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (seg.a + seg.b);
        let left = kronrod15(&mut f, seg.a, mid);
        let right = kronrod15(&mut f, mid, seg.b);
        total.value += left.value + right.value - seg.est.value;
        total.error += left.error + right.error - seg.est.error;
        heap.push(Segment {
            a: seg.a,
            b: mid,
            est: left,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            est: right,
        });
    }
    // Re-sum to shed the drift of the running updates.
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), s| (v + s.est.value, e + s.est.error));
    Ok(Integral { value, error })
}

/// Iterated integral of `f(x, y)` over `[x0, x1] × [y0, y1]`.
///
/// Half of the tolerance budget goes to the outer rule; the other half is
/// spread across the inner integrals so that their accumulated error,
/// integrated over the outer width, stays below `tol / 2`.
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(
    f: F,
    (x0, x1): (f64, f64),
    (y0, y1): (f64, f64),
    tol: f64,
    max_intervals: usize,
) -> Result<Integral, QuadratureError> {
    let width = (x1 - x0).max(f64::MIN_POSITIVE);
    let inner_tol = 0.5 * tol / width;
    let mut inner_error: f64 = 0.0;
    let mut failure = None;
    let outer = integrate(
        |x| match integrate(|y| f(x, y), y0, y1, inner_tol, max_intervals) {
            Ok(r) => {
                inner_error = inner_error.max(r.error);
                r.value
            }
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        x0,
        x1,
        0.5 * tol,
        max_intervals,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Integral {
        value: outer.value,
        error: outer.error + inner_error * width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| 3.0 * x * x + 1.0, 0.0, 2.0, 1e-12, 10).unwrap();
        assert!((r.value - 10.0).abs() < 1e-13);
    }

    #[test]
    fn kinked_integrand_converges() {
        let r = integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-10, 200).unwrap();
        assert!((r.value - 0.29).abs() < 1e-10, "{}", r.value);
    }

    #[test]
    fn exponential_tail() {
        let r = integrate(|x: f64| (-x).exp(), 0.0, 40.0, 1e-10, 100).unwrap();
        assert!((r.value - (1.0 - (-40.0f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn empty_and_reversed_bounds() {
        assert_eq!(integrate(|x| x, 1.0, 1.0, 1e-8, 10).unwrap().value, 0.0);
        assert!(matches!(
            integrate(|x| x, 1.0, 0.0, 1e-8, 10),
            Err(QuadratureError::InvalidBounds(..))
        ));
    }

    #[test]
    fn reports_non_convergence() {
        let r = integrate(|x: f64| 1.0 / x.sqrt().max(1e-300), 0.0, 1.0, 1e-14, 4);
        assert!(matches!(r, Err(QuadratureError::NotConverged { .. })));
    }

    #[test]
    fn separable_2d() {
        let r = integrate_2d(
            |x, y| (-x).exp() * (-2.0 * y).exp(),
            (0.0, 30.0),
            (0.0, 30.0),
            1e-9,
            200,
        )
        .unwrap();
        assert!((r.value - 0.5).abs() < 1e-9, "{}", r.value);
    }
}
