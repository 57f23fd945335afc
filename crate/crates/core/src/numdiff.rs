//! Central finite differences for gradients and Hessians.

use crate::error::Result;

/// Gradient step for coordinate value `x`: `max(1e-6, 1e-7·|x|)`.
#[inline]
pub fn gradient_step(x: f64) -> f64 {
    (1e-7 * x.abs()).max(1e-6)
}

/// Outer step used when differencing a gradient to form a Hessian.
#[inline]
pub fn hessian_step(x: f64) -> f64 {
    (1e-4 * x.abs()).max(1e-4)
}

pub fn central_gradient<F>(f: F, x: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let h = gradient_step(x[j]);
        probe[j] = x[j] + h;
        let up = f(&probe)?;
        probe[j] = x[j] - h;
        let down = f(&probe)?;
        probe[j] = x[j];
        // the realized step (x+h)-(x-h) can differ from 2h in floating point
        let span = (x[j] + h) - (x[j] - h);
        grad.push((up - down) / span);
    }
    Ok(grad)
}

/// Hessian by central differences of `grad`. Returned unsymmetrized so the
/// caller can inspect the asymmetry; see [`asymmetry`] and [`symmetrize`].
pub fn hessian_from_gradient<G>(grad: G, x: &[f64]) -> Result<Vec<Vec<f64>>>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let p = x.len();
    let mut probe = x.to_vec();
    let mut h = vec![vec![0.0; p]; p];
    for j in 0..p {
        let step = hessian_step(x[j]);
        probe[j] = x[j] + step;
        let up = grad(&probe)?;
        probe[j] = x[j] - step;
        let down = grad(&probe)?;
        probe[j] = x[j];
        let span = (x[j] + step) - (x[j] - step);
        for i in 0..p {
            h[i][j] = (up[i] - down[i]) / span;
        }
    }
    Ok(h)
}

/// `max |H_ij - H_ji|`, and `max |H_ij|`.
pub fn asymmetry(h: &[Vec<f64>]) -> (f64, f64) {
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..h.len() {
        for j in 0..h.len() {
            worst = worst.max((h[i][j] - h[j][i]).abs());
            scale = scale.max(h[i][j].abs());
        }
    }
    (worst, scale)
}

pub fn symmetrize(h: &mut [Vec<f64>]) {
    for i in 0..h.len() {
        for j in (i + 1)..h.len() {
            let m = 0.5 * (h[i][j] + h[j][i]);
            h[i][j] = m;
            h[j][i] = m;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // f(x) = 3x0² - 2x0x1 + 0.5x1² + 4x0 - x1 + 7
    fn quadratic(x: &[f64]) -> Result<f64> {
        Ok(3.0 * x[0] * x[0] - 2.0 * x[0] * x[1] + 0.5 * x[1] * x[1] + 4.0 * x[0] - x[1] + 7.0)
    }

    #[test]
    fn quadratic_gradient_is_exact() {
        for x in [[0.0, 0.0], [1.5, -2.0], [120.0, 35.0]] {
            let g = central_gradient(quadratic, &x).unwrap();
            let exact = [6.0 * x[0] - 2.0 * x[1] + 4.0, -2.0 * x[0] + x[1] - 1.0];
            for (a, b) in g.iter().zip(exact) {
                assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn quadratic_hessian() {
        let grad = |x: &[f64]| central_gradient(quadratic, x);
        let h = hessian_from_gradient(grad, &[0.3, -0.7]).unwrap();
        let (asym, scale) = asymmetry(&h);
        assert!(asym <= 1e-4 * scale);
        assert_relative_eq!(h[0][0], 6.0, max_relative = 1e-5);
        assert_relative_eq!(h[0][1], -2.0, max_relative = 1e-5);
        assert_relative_eq!(h[1][1], 1.0, max_relative = 1e-5);
    }

    #[test]
    fn symmetrize_averages() {
        let mut h = vec![vec![1.0, 2.0], vec![4.0, 1.0]];
        symmetrize(&mut h);
        assert_eq!(h[0][1], 3.0);
        assert_eq!(h[1][0], 3.0);
    }
}
