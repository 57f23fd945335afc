//! Brute-force references for the closed-form likelihood and conditional
//! mean: a dense `Π` with an SVD pseudo-inverse and pseudo-determinant,
//! integrated against the half-normal density by adaptive quadrature.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::likelihood::{residual, scaling_values, FrontierSign, ParameterVector};
use crate::panel::{demean, FirmBlock};

use super::quadrature::{integrate_toward_zero, integrate_upper_tail, Tolerance};

/// Largest panel length the oracle accepts.
pub const MAX_ORACLE_T: usize = 6;

const SINGULAR_CUTOFF: f64 = 1e-12;

/// `Π = σ_v² (I − J/T)`.
pub fn pi_matrix(t_len: usize, sigma_v: f64) -> DMatrix<f64> {
    let s2 = sigma_v * sigma_v;
    let inv_t = 1.0 / t_len as f64;
    DMatrix::from_fn(t_len, t_len, |i, j| {
        if i == j {
            s2 * (1.0 - inv_t)
        } else {
            -s2 * inv_t
        }
    })
}

/// Moore-Penrose inverse from the SVD, dropping singular values below
/// `1e-12 · σ_max`.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let cutoff = SINGULAR_CUTOFF * svd.singular_values.max();
    svd.pseudo_inverse(cutoff)
        .expect("SVD computed with both U and V^T")
}

/// Product of the non-negligible singular values.
pub fn pseudo_determinant(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let cutoff = SINGULAR_CUTOFF * sv.max();
    sv.iter().filter(|&&s| s > cutoff).product()
}

/// Dense-algebra `(μ₁, σ₁)` from an explicit `Π⁻`.
pub fn dense_mu1_sigma1(
    eps_tilde: &[f64],
    h_tilde: &[f64],
    sigma_u: f64,
    sigma_v: f64,
    sign: FrontierSign,
) -> (f64, f64) {
    let pinv = pseudo_inverse(&pi_matrix(eps_tilde.len(), sigma_v));
    let e = DVector::from_column_slice(eps_tilde);
    let h = DVector::from_column_slice(h_tilde);
    let hph = h.dot(&(&pinv * &h));
    let eph = e.dot(&(&pinv * &h));
    let s = match sign {
        FrontierSign::Production => 1.0,
        FrontierSign::Cost => -1.0,
    };
    let precision = hph + 1.0 / (sigma_u * sigma_u);
    (-s * eph / precision, precision.sqrt().recip())
}

/// Log joint density of the demeaned residual and `u*`, as a function of
/// `u* ≥ 0`.
struct JointDensity {
    pinv: DMatrix<f64>,
    eps: DVector<f64>,
    h_tilde: DVector<f64>,
    sign: f64,
    constant: f64,
    sigma_u: f64,
}

impl JointDensity {
    fn new(block: &FirmBlock, params: &ParameterVector, sign: FrontierSign) -> Result<Self> {
        let t_len = block.len();
        if !(2..=MAX_ORACLE_T).contains(&t_len) {
            return Err(Error::InvalidArgument(format!(
                "quadrature oracle supports 2 ≤ T ≤ {MAX_ORACLE_T}, got {t_len}"
            )));
        }
        let pi = pi_matrix(t_len, params.sigma_v());
        let pinv = pseudo_inverse(&pi);
        let rank = (t_len - 1) as f64;
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        let sigma_u = params.sigma_u();
        // singular normal on the (T−1)-dimensional range of Π, times the
        // half-normal density 2/(√(2π)σ_u)·exp(−u²/2σ_u²)
        let constant = -0.5 * rank * ln_2pi - 0.5 * pseudo_determinant(&pi).ln() + (2.0f64).ln()
            - 0.5 * ln_2pi
            - sigma_u.ln();
        let h = scaling_values(&block.z, params.delta())?;
        let (h_tilde, _) = demean(&h);
        Ok(JointDensity {
            pinv,
            eps: DVector::from_vec(residual(block, params.beta())),
            h_tilde: DVector::from_vec(h_tilde),
            sign: match sign {
                FrontierSign::Production => 1.0,
                FrontierSign::Cost => -1.0,
            },
            constant,
            sigma_u,
        })
    }

    fn ln_density(&self, u: f64) -> f64 {
        let noise = &self.eps + &self.h_tilde * (self.sign * u);
        let q = noise.dot(&(&self.pinv * &noise));
        self.constant - 0.5 * q - 0.5 * (u / self.sigma_u).powi(2)
    }

    /// Mode of the log density on `[0, ∞)` and a curvature-based width.
    fn mode_and_width(&self) -> (f64, f64, f64) {
        let scale = self.sigma_u;
        let mut best_u = 0.0;
        let mut best = self.ln_density(0.0);
        let grid: Vec<f64> = (-40..=12).map(|k| scale * 2f64.powi(k)).collect();
        let mut best_k = None;
        for (k, &u) in grid.iter().enumerate() {
            let v = self.ln_density(u);
            if v > best {
                best = v;
                best_u = u;
                best_k = Some(k);
            }
        }
        if let Some(k) = best_k {
            // golden-section search between the grid neighbours
            let mut lo = if k == 0 { 0.0 } else { grid[k - 1] };
            let mut hi = grid[(k + 1).min(grid.len() - 1)];
            let ratio = 0.5 * (5f64.sqrt() - 1.0);
            let mut c = hi - ratio * (hi - lo);
            let mut d = lo + ratio * (hi - lo);
            let (mut fc, mut fd) = (self.ln_density(c), self.ln_density(d));
            for _ in 0..200 {
                if (hi - lo) <= 1e-15 * hi.max(1e-300) {
                    break;
                }
                if fc > fd {
                    hi = d;
                    d = c;
                    fd = fc;
                    c = hi - ratio * (hi - lo);
                    fc = self.ln_density(c);
                } else {
                    lo = c;
                    c = d;
                    fc = fd;
                    d = lo + ratio * (hi - lo);
                    fd = self.ln_density(d);
                }
            }
            best_u = 0.5 * (lo + hi);
            best = self.ln_density(best_u);
        }
        let step = 1e-3 * best_u.max(scale);
        // centre the stencil at the mode unless it would cross zero
        let centre = best_u.max(step);
        let curvature = (self.ln_density(centre + step) - 2.0 * self.ln_density(centre)
            + self.ln_density(centre - step))
            / (step * step);
        let width = if curvature < 0.0 {
            (-curvature).sqrt().recip()
        } else {
            scale
        };
        (best_u, best, width)
    }

    /// `(ln ∫ p du, ∫ u p du / ∫ p du)`.
    fn moments(&self) -> Result<(f64, f64)> {
        let (mode, peak, width) = self.mode_and_width();
        let tol = Tolerance {
            absolute: 0.0,
            relative: 1e-12,
            max_intervals: 8000,
        };
        let p = |u: f64| (self.ln_density(u) - peak).exp();
        let up = |u: f64| u * (self.ln_density(u) - peak).exp();
        let mass = integrate_toward_zero(p, mode, width, tol)?.value
            + integrate_upper_tail(p, mode, width, tol)?.value;
        let first = integrate_toward_zero(up, mode, width, tol)?.value
            + integrate_upper_tail(up, mode, width, tol)?.value;
        if !(mass > 0.0) {
            return Err(Error::Quadrature("vanishing integral".into()));
        }
        Ok((peak + mass.ln(), first / mass))
    }
}

/// `ln ∫₀^∞ p(ε̃ | u*) p(u*) du*` for one firm.
pub fn oracle_loglik(
    block: &FirmBlock,
    params: &ParameterVector,
    sign: FrontierSign,
) -> Result<f64> {
    Ok(JointDensity::new(block, params, sign)?.moments()?.0)
}

/// `E(u_it | ε̃) = h_it · E(u* | ε̃)` by quadrature, one value per year.
pub fn oracle_conditional_mean(
    block: &FirmBlock,
    params: &ParameterVector,
    sign: FrontierSign,
) -> Result<Vec<f64>> {
    let density = JointDensity::new(block, params, sign)?;
    let (_, mean_u_star) = density.moments()?;
    let h = scaling_values(&block.z, params.delta())?;
    Ok(h.iter().map(|h| h * mean_u_star).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_by_two_pseudo_inverse_quadratic_form() {
        let pinv = pseudo_inverse(&pi_matrix(2, 1.0));
        let e = DVector::from_column_slice(&[-1.0, 1.0]);
        assert_relative_eq!(e.dot(&(&pinv * &e)), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn pseudo_inverse_identities() {
        for t in 2..=6 {
            let pi = pi_matrix(t, 0.7);
            let pinv = pseudo_inverse(&pi);
            let back = &pi * &pinv * &pi;
            assert!((back - &pi).amax() <= 1e-10);
            let again = &pinv * &pi * &pinv;
            assert!((again - &pinv).amax() <= 1e-10);
            assert_relative_eq!(
                pseudo_determinant(&pi),
                0.49f64.powi(t as i32 - 1),
                max_relative = 1e-10
            );
        }
    }
}
