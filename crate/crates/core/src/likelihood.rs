//! Marginal log-likelihood of the within-transformed stochastic frontier
//! with scaled half-normal inefficiency `u_it = h_it · u*_i`,
//! `h_it = exp(z_it'δ)`, `u*_i ~ N⁺(0, σ_u²)`.
//!
//! The demeaned noise has covariance `Π = σ_v²(I − J/T)`. Because
//! `I − J/T` is a symmetric idempotent projector, its Moore-Penrose inverse
//! is itself, so every quadratic form `a'Π⁻b` on demeaned vectors reduces
//! to `σ_v⁻² Σ_t a_t b_t`.
//!
//! Parameter packing: `[β (14) | δ (K) | ln σ_u | ln σ_v]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;
use crate::numdiff;
use crate::panel::{demean, is_demeaned, FirmBlock, TransformedPanel};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Largest `z'δ` accepted before `exp` is treated as overflow.
pub const MAX_INDEX: f64 = 700.0;

/// Sign of the inefficiency term in the composed error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontierSign {
    /// `y = α + xβ + v − u`.
    #[default]
    Production,
    /// `y = α + xβ + v + u`.
    Cost,
}

impl FrontierSign {
    /// `s` such that the noise is `ṽ = ε̃ + s·h̃·u*`.
    fn noise_sign(self) -> f64 {
        match self {
            FrontierSign::Production => 1.0,
            FrontierSign::Cost => -1.0,
        }
    }
}

/// Packed parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub values: Vec<f64>,
    pub n_beta: usize,
    pub n_delta: usize,
}

impl ParameterVector {
    pub fn new(beta: &[f64], delta: &[f64], ln_sigma_u: f64, ln_sigma_v: f64) -> Self {
        let mut values = Vec::with_capacity(beta.len() + delta.len() + 2);
        values.extend_from_slice(beta);
        values.extend_from_slice(delta);
        values.push(ln_sigma_u);
        values.push(ln_sigma_v);
        ParameterVector {
            values,
            n_beta: beta.len(),
            n_delta: delta.len(),
        }
    }

    pub fn from_packed(values: Vec<f64>, n_beta: usize, n_delta: usize) -> Result<Self> {
        if values.len() != n_beta + n_delta + 2 {
            return Err(Error::InvalidArgument(format!(
                "packed vector has length {}, expected {}",
                values.len(),
                n_beta + n_delta + 2
            )));
        }
        Ok(ParameterVector {
            values,
            n_beta,
            n_delta,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn beta(&self) -> &[f64] {
        &self.values[..self.n_beta]
    }

    pub fn delta(&self) -> &[f64] {
        &self.values[self.n_beta..self.n_beta + self.n_delta]
    }

    pub fn ln_sigma_u(&self) -> f64 {
        self.values[self.n_beta + self.n_delta]
    }

    pub fn ln_sigma_v(&self) -> f64 {
        self.values[self.n_beta + self.n_delta + 1]
    }

    pub fn sigma_u(&self) -> f64 {
        self.ln_sigma_u().exp()
    }

    pub fn sigma_v(&self) -> f64 {
        self.ln_sigma_v().exp()
    }

    /// Parameter names in packing order.
    pub fn names(beta_names: &[String], delta_names: &[String]) -> Vec<String> {
        let mut names: Vec<String> = beta_names.to_vec();
        names.extend(delta_names.iter().map(|d| format!("delta_{d}")));
        names.push("ln_sigma_u".into());
        names.push("ln_sigma_v".into());
        names
    }
}

/// `h_t = exp(z_t'δ)` for each row of `z` (T × K).
pub fn scaling_values(z: &nalgebra::DMatrix<f64>, delta: &[f64]) -> Result<Vec<f64>> {
    if z.ncols() != delta.len() {
        return Err(Error::Misaligned(format!(
            "{} determinant columns but {} coefficients",
            z.ncols(),
            delta.len()
        )));
    }
    (0..z.nrows())
        .map(|t| {
            let index: f64 = z.row(t).iter().zip(delta).map(|(a, b)| a * b).sum();
            if !index.is_finite() || index > MAX_INDEX {
                Err(Error::Overflow(format!(
                    "scaling index z'δ = {index} exceeds {MAX_INDEX}"
                )))
            } else {
                Ok(index.exp())
            }
        })
        .collect()
}

/// `a'Π⁻b` for demeaned `a`, `b`.
pub fn bilinear_form(a: &[f64], b: &[f64], sigma_v: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (sigma_v * sigma_v)
}

/// `ε̃'Π⁻ε̃` for a demeaned residual.
pub fn quadratic_form(eps_tilde: &[f64], sigma_v: f64) -> Result<f64> {
    if !is_demeaned(eps_tilde) {
        return Err(Error::NotDemeaned {
            sum: eps_tilde.iter().sum(),
        });
    }
    Ok(bilinear_form(eps_tilde, eps_tilde, sigma_v))
}

/// Posterior location and scale `(μ₁, σ₁)` of `u*` given the demeaned
/// residual, before truncation at zero.
pub fn mu1_sigma1(
    eps_tilde: &[f64],
    h_tilde: &[f64],
    sigma_u: f64,
    sigma_v: f64,
    sign: FrontierSign,
) -> (f64, f64) {
    let precision = bilinear_form(h_tilde, h_tilde, sigma_v) + 1.0 / (sigma_u * sigma_u);
    let cross = bilinear_form(eps_tilde, h_tilde, sigma_v);
    let mu1 = -sign.noise_sign() * cross / precision;
    (mu1, precision.sqrt().recip())
}

/// Residual `ε̃ = ỹ − x̃β` for one firm.
pub fn residual(block: &FirmBlock, beta: &[f64]) -> Vec<f64> {
    let fitted = &block.x_tilde * nalgebra::DVector::from_column_slice(beta);
    block
        .y_tilde
        .iter()
        .zip(fitted.iter())
        .map(|(y, f)| y - f)
        .collect()
}

/// Per-firm quantities shared by the likelihood and the inefficiency index.
#[derive(Debug, Clone)]
pub struct FirmPosterior {
    pub eps_tilde: Vec<f64>,
    pub h: Vec<f64>,
    pub h_tilde: Vec<f64>,
    pub mu1: f64,
    pub sigma1: f64,
}

pub fn firm_posterior(
    block: &FirmBlock,
    params: &ParameterVector,
    sign: FrontierSign,
) -> Result<FirmPosterior> {
    let eps_tilde = residual(block, params.beta());
    let h = scaling_values(&block.z, params.delta())?;
    let (h_tilde, _) = demean(&h);
    let (mu1, sigma1) = mu1_sigma1(
        &eps_tilde,
        &h_tilde,
        params.sigma_u(),
        params.sigma_v(),
        sign,
    );
    Ok(FirmPosterior {
        eps_tilde,
        h,
        h_tilde,
        mu1,
        sigma1,
    })
}

/// Marginal log-likelihood of one firm, using its own panel length.
pub fn panel_loglik(
    block: &FirmBlock,
    params: &ParameterVector,
    sign: FrontierSign,
) -> Result<f64> {
    let t_len = block.len();
    if t_len < 2 {
        return Err(Error::Evaluation(format!(
            "firm `{}` has fewer than two observations",
            block.firm_id
        )));
    }
    let post = firm_posterior(block, params, sign)?;
    let dof = (t_len - 1) as f64;
    let ln_sigma_v = params.ln_sigma_v();
    let sigma_v = params.sigma_v();
    let ratio = post.mu1 / post.sigma1;
    let value = -0.5 * dof * LN_2PI
        - dof * ln_sigma_v
        - 0.5 * bilinear_form(&post.eps_tilde, &post.eps_tilde, sigma_v)
        + 0.5 * ratio * ratio
        + post.sigma1.ln()
        + normal::ln_cdf(ratio)
        - params.ln_sigma_u()
        - 0.5f64.ln();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Evaluation(format!(
            "non-finite log-likelihood for firm `{}`",
            block.firm_id
        )))
    }
}

/// Sum of per-firm log-likelihoods in firm order (Neumaier summation).
pub fn total_loglik(
    panel: &TransformedPanel,
    params: &ParameterVector,
    sign: FrontierSign,
) -> Result<f64> {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for block in &panel.firms {
        let term = panel_loglik(block, params, sign)?;
        let next = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - next) + term;
        } else {
            comp += (term - next) + sum;
        }
        sum = next;
    }
    Ok(sum + comp)
}

/// Likelihood bound to a panel, sign convention and packing layout.
#[derive(Debug, Clone)]
pub struct SfaModel<'a> {
    pub panel: &'a TransformedPanel,
    pub sign: FrontierSign,
}

impl<'a> SfaModel<'a> {
    pub fn new(panel: &'a TransformedPanel, sign: FrontierSign) -> Self {
        SfaModel { panel, sign }
    }

    pub fn n_params(&self) -> usize {
        self.panel.n_regressors() + self.panel.n_determinants() + 2
    }

    pub fn pack(&self, values: &[f64]) -> Result<ParameterVector> {
        ParameterVector::from_packed(
            values.to_vec(),
            self.panel.n_regressors(),
            self.panel.n_determinants(),
        )
    }

    pub fn loglik(&self, values: &[f64]) -> Result<f64> {
        total_loglik(self.panel, &self.pack(values)?, self.sign)
    }

    pub fn gradient(&self, values: &[f64]) -> Result<Vec<f64>> {
        loglik_gradient(self.panel, &self.pack(values)?, self.sign)
    }
}

/// Central finite-difference gradient of [`total_loglik`].
pub fn loglik_gradient(
    panel: &TransformedPanel,
    params: &ParameterVector,
    sign: FrontierSign,
) -> Result<Vec<f64>> {
    let (nb, nd) = (params.n_beta, params.n_delta);
    numdiff::central_gradient(
        |v| {
            total_loglik(
                panel,
                &ParameterVector::from_packed(v.to_vec(), nb, nd)?,
                sign,
            )
        },
        &params.values,
    )
}
