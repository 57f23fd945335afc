//! Standard normal density, distribution and Mills-ratio helpers that stay
//! accurate far into the lower tail.
//!
//! The conditional-inefficiency quantities evaluate `Φ(μ₁/σ₁)` where the
//! argument can be very negative for nearly efficient firms, so `ln Φ` and
//! `φ/Φ` switch to the asymptotic expansion of the Mills ratio below
//! [`TAIL_SWITCH`].

use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Below this argument the lower tail uses the Mills-ratio series.
pub const TAIL_SWITCH: f64 = -10.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[inline]
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[inline]
pub fn ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
#[inline]
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Lower-tail series for `t = -x > 0`:
/// returns `(S, S - 1)` where `Φ(x)/φ(x) = S / t` and
/// `S = Σ_n (-1)^n (2n-1)!! / t^{2n}`.
///
/// Terms are summed until they stop shrinking or drop below 1e-17.
fn tail_series(t: f64) -> (f64, f64) {
    let inv_t2 = 1.0 / (t * t);
    let mut term = 1.0;
    let mut tail = 0.0;
    let mut n = 1.0;
    loop {
        let next = -term * (2.0 * n - 1.0) * inv_t2;
        if next.abs() >= term.abs() || next.abs() < 1e-17 {
            if next.abs() < term.abs() {
                tail += next;
            }
            break;
        }
        tail += next;
        term = next;
        n += 1.0;
    }
    (1.0 + tail, tail)
}

/// `ln Φ(x)`, finite for every finite `x`.
pub fn ln_cdf(x: f64) -> f64 {
    if x < TAIL_SWITCH {
        let t = -x;
        let (s, _) = tail_series(t);
        ln_pdf(x) - t.ln() + s.ln()
    } else if x > 5.0 {
        (-sf(x)).ln_1p()
    } else {
        cdf(x).ln()
    }
}

/// Inverse Mills ratio `φ(x)/Φ(x)`.
pub fn mills(x: f64) -> f64 {
    if x < TAIL_SWITCH {
        let t = -x;
        let (s, _) = tail_series(t);
        t / s
    } else {
        (ln_pdf(x) - ln_cdf(x)).exp()
    }
}

/// `x + φ(x)/Φ(x)`, the standardized mean of a normal truncated to the
/// positive half-line. Strictly positive; computed without cancellation
/// in the lower tail.
pub fn truncated_mean_factor(x: f64) -> f64 {
    if x < TAIL_SWITCH {
        let t = -x;
        let (s, tail) = tail_series(t);
        // x + t/S = -t(S - 1)/S
        -t * tail / s
    } else {
        x + mills(x)
    }
}

/// Two-sided normal-approximation p-value for a z statistic.
pub fn two_sided_p(z: f64) -> f64 {
    2.0 * sf(z.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn center_values() {
        assert_relative_eq!(cdf(0.0), 0.5, epsilon = 1e-16);
        assert_relative_eq!(ln_cdf(0.0), 0.5f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(mills(0.0), (2.0 / PI).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(cdf(1.959_963_984_540_054), 0.975, epsilon = 1e-14);
    }

    #[test]
    fn tail_series_matches_erfc_between_switch_and_underflow() {
        // erfc keeps relative accuracy down to about -37, so it is an
        // independent reference on the overlap with the series branch.
        for i in 0..=270 {
            let x = -10.0 - 0.1 * i as f64;
            let reference = cdf(x).ln();
            assert_relative_eq!(ln_cdf(x), reference, max_relative = 1e-13);
            let mills_ref = (ln_pdf(x) - reference).exp();
            assert_relative_eq!(mills(x), mills_ref, max_relative = 1e-12);
        }
    }

    #[test]
    fn ln_cdf_is_continuous_at_switch() {
        let below = ln_cdf(TAIL_SWITCH - 1e-12);
        let above = ln_cdf(TAIL_SWITCH + 1e-12);
        assert!((below - above).abs() < 1e-10);
    }

    #[test]
    fn deep_tail_is_finite() {
        for x in [-50.0, -500.0, -1e4, -1e8] {
            let l = ln_cdf(x);
            assert!(l.is_finite());
            let m = truncated_mean_factor(x);
            assert!(m > 0.0 && m.is_finite(), "x={x} m={m}");
            // x + λ(x) ≈ 1/|x| for large |x|
            assert_relative_eq!(m, 1.0 / x.abs(), max_relative = 3.0 / (x * x));
        }
    }

    #[test]
    fn upper_tail_uses_log1p() {
        let x = 9.0;
        let l = ln_cdf(x);
        assert!(l < 0.0);
        assert_relative_eq!(l, -sf(x), max_relative = 1e-12);
    }

    #[test]
    fn truncated_mean_factor_is_positive_and_increasing() {
        let mut prev = 0.0;
        for i in 0..400 {
            let x = -30.0 + 0.1 * i as f64;
            let m = truncated_mean_factor(x);
            assert!(m > prev, "x={x}");
            prev = m;
        }
    }

    #[test]
    fn p_values() {
        assert_relative_eq!(two_sided_p(1.959_963_984_540_054), 0.05, epsilon = 1e-12);
        assert_relative_eq!(two_sided_p(0.0), 1.0, epsilon = 1e-15);
    }
}
