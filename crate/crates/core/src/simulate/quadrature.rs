//! Globally adaptive 7/15-point Gauss–Kronrod quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

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
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub absolute: f64,
    pub relative: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            absolute: 0.0,
            relative: 1e-11,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
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
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (j, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// `∫_a^b f(x) dx` by bisecting the worst interval until the summed error
/// estimate meets `max(absolute, relative·|value|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            intervals: 0,
        });
    }
    let first = kronrod(&f, a, b);
    let mut value = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    while error > tol.absolute.max(tol.relative * value.abs()) {
        if !value.is_finite() {
            return Err(Error::Quadrature("non-finite integrand".into()));
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::Quadrature(format!(
                "error estimate {error:e} above tolerance after {} intervals",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval cannot be split further in floating point
            heap.push(worst);
            break;
        }
        let left = kronrod(&f, worst.a, mid);
        let right = kronrod(&f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // re-sum to shed accumulated update error
    let value: f64 = heap.iter().map(|s| s.value).sum();
    let error: f64 = heap.iter().map(|s| s.error).sum();
    if error > tol.absolute.max(tol.relative * value.abs()) * 10.0 {
        return Err(Error::Quadrature(format!("final error estimate {error:e}")));
    }
    Ok(Estimate {
        value,
        error,
        intervals: heap.len(),
    })
}

/// `∫_c^∞ f(u) du` via `u = c + w·x/(1−x)`, `x ∈ [0,1)`.
pub fn integrate_upper_tail<F: Fn(f64) -> f64>(
    f: F,
    c: f64,
    w: f64,
    tol: Tolerance,
) -> Result<Estimate> {
    integrate(
        |x| {
            if x >= 1.0 {
                return 0.0;
            }
            let d = 1.0 - x;
            let v = f(c + w * x / d) * w / (d * d);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        tol,
    )
}

/// `∫_0^c f(u) du` via `u = c − w·x/(1−x)`, `x ∈ [0, c/(c+w)]`, which
/// concentrates nodes near the upper end `c`.
pub fn integrate_toward_zero<F: Fn(f64) -> f64>(
    f: F,
    c: f64,
    w: f64,
    tol: Tolerance,
) -> Result<Estimate> {
    if c <= 0.0 {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            intervals: 0,
        });
    }
    let x_end = c / (c + w);
    integrate(
        |x| {
            let d = 1.0 - x;
            let u = (c - w * x / d).max(0.0);
            f(u) * w / (d * d)
        },
        0.0,
        x_end,
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let est = integrate(|x| 3.0 * x * x - x + 2.0, -1.0, 2.0, Tolerance::default()).unwrap();
        assert_relative_eq!(est.value, 9.0 - 1.5 + 6.0, max_relative = 1e-14);
    }

    #[test]
    fn gaussian_half_line() {
        let est =
            integrate_upper_tail(|u| (-0.5 * u * u).exp(), 0.0, 1.0, Tolerance::default()).unwrap();
        assert_relative_eq!(est.value, (PI / 2.0).sqrt(), max_relative = 1e-11);
    }

    #[test]
    fn sharp_peak_far_from_origin() {
        // N(50, 0.01²) mass on [0, ∞) split at the mode
        let f = |u: f64| (-0.5 * ((u - 50.0) / 0.01).powi(2)).exp();
        let tol = Tolerance::default();
        let lo = integrate_toward_zero(f, 50.0, 0.01, tol).unwrap();
        let hi = integrate_upper_tail(f, 50.0, 0.01, tol).unwrap();
        assert_relative_eq!(
            lo.value + hi.value,
            0.01 * (2.0 * PI).sqrt(),
            max_relative = 1e-11
        );
    }

    #[test]
    fn exponential_tail() {
        let est =
            integrate_upper_tail(|u| (-3.0 * u).exp(), 1.0, 0.5, Tolerance::default()).unwrap();
        assert_relative_eq!(est.value, (-3.0f64).exp() / 3.0, max_relative = 1e-11);
    }
}
