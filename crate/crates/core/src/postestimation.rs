//! Conditional inefficiency, efficiency scores and firm fixed effects from
//! fitted parameters.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::likelihood::{firm_posterior, FrontierSign, ParameterVector};
use crate::normal::truncated_mean_factor;
use crate::panel::{demean, Category, FirmBlock, TransformedPanel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InefficiencyRecord {
    pub firm_id: String,
    pub category: Option<Category>,
    pub year: i32,
    /// `E(u_it | ε̃_i)`.
    pub u_hat: f64,
    /// `E(u*_i | ε̃_i)`, so that `u_hat = h · u_star_hat`.
    pub u_star_hat: f64,
    /// `exp(−u_hat)`.
    pub te_score: f64,
    pub h: f64,
}

/// `E(u* | ε̃) = σ₁·(r + λ(r))` with `r = μ₁/σ₁`, which stays accurate
/// when `r` is far in the lower tail.
fn posterior_mean(mu: f64, sigma: f64) -> f64 {
    (sigma * truncated_mean_factor(mu / sigma)).max(0.0)
}

/// Conditional inefficiency of every firm-year of one firm.
pub fn firm_inefficiency(
    block: &FirmBlock,
    params: &ParameterVector,
    sign: FrontierSign,
) -> Result<Vec<InefficiencyRecord>> {
    let post = firm_posterior(block, params, sign)?;
    let u_star_hat = posterior_mean(post.mu1, post.sigma1);
    Ok(block
        .years
        .iter()
        .zip(&post.h)
        .map(|(&year, &h)| {
            let u_hat = h * u_star_hat;
            InefficiencyRecord {
                firm_id: block.firm_id.clone(),
                category: block.category,
                year,
                u_hat,
                u_star_hat,
                te_score: (-u_hat).exp(),
                h,
            }
        })
        .collect())
}

/// Conditional inefficiency for the whole panel, in firm then year order.
pub fn inefficiency_index(
    panel: &TransformedPanel,
    params: &ParameterVector,
    sign: FrontierSign,
) -> Result<Vec<InefficiencyRecord>> {
    let per_firm: Vec<Result<Vec<InefficiencyRecord>>> = panel
        .firms
        .par_iter()
        .map(|b| firm_inefficiency(b, params, sign))
        .collect();
    let mut out = Vec::with_capacity(panel.n_observations());
    for r in per_firm {
        out.extend(r?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedEffectFormula {
    /// Posterior moments of `u*` with `σ_v^{−2}` weights, identical to the
    /// likelihood's `μ₁`, `σ₁`.
    #[default]
    Corrected,
    /// Posterior moments with `σ_v^{−2T}` and `σ_v^{2T}` weights.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedEffectRecord {
    pub firm_id: String,
    pub category: Option<Category>,
    pub alpha_hat: f64,
    pub mu2: f64,
    pub sigma2: f64,
}

/// `α̂_i = ȳ_i − x̄_iβ̂ ± h̄_i·E(u*_i | ε̃_i)`, adding the mean inefficiency
/// back for a production frontier and subtracting it for a cost frontier.
pub fn firm_fixed_effect(
    block: &FirmBlock,
    params: &ParameterVector,
    sign: FrontierSign,
    formula: FixedEffectFormula,
) -> Result<FixedEffectRecord> {
    let post = firm_posterior(block, params, sign)?;
    let (mu2, sigma2) = match formula {
        FixedEffectFormula::Corrected => (post.mu1, post.sigma1),
        FixedEffectFormula::Literal => {
            let t_len = block.len() as i32;
            let w = params.sigma_v().powi(-2 * t_len);
            let su2 = params.sigma_u().powi(-2);
            let eh: f64 = post
                .eps_tilde
                .iter()
                .zip(&post.h_tilde)
                .map(|(e, h)| e * h)
                .sum();
            let hh: f64 = post.h_tilde.iter().map(|h| h * h).sum();
            let s = match sign {
                FrontierSign::Production => 1.0,
                FrontierSign::Cost => -1.0,
            };
            let mu2 = -s * w * eh / (w * hh + su2);
            let var =
                params.sigma_v().powi(2 * t_len) / (hh + params.sigma_v().powi(2 * t_len) * su2);
            (mu2, var.sqrt())
        }
    };
    let h_mean = post.h.iter().sum::<f64>() / post.h.len() as f64;
    let fitted_mean: f64 = block
        .x_mean
        .iter()
        .zip(params.beta())
        .map(|(x, b)| x * b)
        .sum();
    let adjustment = h_mean * posterior_mean(mu2, sigma2);
    let alpha_hat = match sign {
        FrontierSign::Production => block.y_mean - fitted_mean + adjustment,
        FrontierSign::Cost => block.y_mean - fitted_mean - adjustment,
    };
    Ok(FixedEffectRecord {
        firm_id: block.firm_id.clone(),
        category: block.category,
        alpha_hat,
        mu2,
        sigma2,
    })
}

pub fn recover_fixed_effects(
    panel: &TransformedPanel,
    params: &ParameterVector,
    sign: FrontierSign,
    formula: FixedEffectFormula,
) -> Result<Vec<FixedEffectRecord>> {
    panel
        .firms
        .par_iter()
        .map(|b| firm_fixed_effect(b, params, sign, formula))
        .collect()
}

/// Mean efficiency score of one group in one year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub group: String,
    pub year: i32,
    pub mean_te: f64,
    pub firms: usize,
}

pub const ALL_GROUP: &str = "All";

/// Mean `te_score` by (category, year), plus an `All` group over every
/// record. Groups are ordered by category, `All` last.
pub fn efficiency_trend(records: &[InefficiencyRecord]) -> Vec<TrendRow> {
    let mut by_cat: BTreeMap<(u8, String), BTreeMap<i32, (f64, usize)>> = BTreeMap::new();
    for r in records {
        let mut keys = vec![(1u8, ALL_GROUP.to_string())];
        if let Some(c) = r.category {
            keys.push((0, c.to_string()));
        }
        for key in keys {
            let cell = by_cat
                .entry(key)
                .or_default()
                .entry(r.year)
                .or_insert((0.0, 0));
            cell.0 += r.te_score;
            cell.1 += 1;
        }
    }
    by_cat
        .into_iter()
        .flat_map(|((_, group), years)| {
            years.into_iter().map(move |(year, (sum, n))| TrendRow {
                group: group.clone(),
                year,
                mean_te: sum / n as f64,
                firms: n,
            })
        })
        .collect()
}

/// Year at which `exp(δ_t·t + δ_tt·t²)` peaks (`δ_tt < 0`) or bottoms out.
pub fn quadratic_turning_point(delta_t: f64, delta_tt: f64) -> Option<f64> {
    (delta_tt != 0.0).then(|| -delta_t / (2.0 * delta_tt))
}

/// Vertex of the least-squares quadratic through `(x, y)`.
pub fn fitted_vertex(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 3 || x.len() != y.len() {
        return None;
    }
    let (xc, x0) = demean(x);
    let design = nalgebra::DMatrix::from_fn(x.len(), 3, |i, j| xc[i].powi(j as i32));
    let coef = design
        .svd(true, true)
        .solve(&nalgebra::DVector::from_column_slice(y), 1e-12)
        .ok()?;
    (coef[2] != 0.0).then(|| x0 - coef[1] / (2.0 * coef[2]))
}
