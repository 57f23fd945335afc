//! Maximum-likelihood driver: OLS starting values, multistart BFGS,
//! finite-difference observed information and delta-method transforms.

pub mod bfgs;
pub mod report;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{FrontierSign, ParameterVector, SfaModel};
use crate::numdiff;
use crate::panel::{within_transform, PanelDataset, TransformedPanel};
use crate::translog;

use self::bfgs::{BfgsOptions, Termination};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub max_iterations: usize,
    /// Tolerance on `max_j |∂ lnL / ∂θ_j|`.
    pub gradient_tolerance: f64,
    /// Relative step size below which iterations stop.
    pub parameter_tolerance: f64,
    pub multistart: usize,
    pub seed: u64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            parameter_tolerance: 1e-9,
            multistart: 3,
            seed: 1,
        }
    }
}

impl EstimationConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.gradient_tolerance > 0.0 && self.parameter_tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if self.multistart == 0 {
            return Err(Error::InvalidArgument(
                "multistart must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Diagnostics of the observed information `−∇² lnL` at the optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformationDiagnostics {
    pub positive_definite: bool,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// `max/min` eigenvalue ratio; absent when not positive definite.
    pub condition_number: Option<f64>,
    /// `max |H_ij − H_ji|` of the unsymmetrized finite-difference Hessian.
    pub asymmetry: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardErrors {
    /// `sqrt(diag(H⁻¹))`, withheld when `H` is not positive definite.
    pub stderr: Option<Vec<f64>>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub diagnostics: InformationDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub index: usize,
    pub loglik: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub parameter_names: Vec<String>,
    pub params: ParameterVector,
    pub stderr: Option<Vec<f64>>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_max: f64,
    /// Index of the winning start.
    pub start: usize,
    pub starts: Vec<StartSummary>,
    pub information: InformationDiagnostics,
    pub n_firms: usize,
    pub n_observations: usize,
}

impl EstimationResult {
    pub fn value(&self, name: &str) -> Option<(f64, Option<f64>)> {
        let j = self.parameter_names.iter().position(|n| n == name)?;
        Some((self.params.values[j], self.stderr.as_ref().map(|s| s[j])))
    }
}

/// Panel prepared for estimation plus the determinant columns that were
/// dropped for having no variation in the estimation set.
#[derive(Debug, Clone)]
pub struct PreparedPanel {
    pub panel: TransformedPanel,
    pub base_year: i32,
    pub dropped_determinants: Vec<String>,
}

/// Builds translog rows with `t = year − base_year`, drops constant
/// determinant columns and applies the within transformation.
pub fn prepare_panel(data: &PanelDataset, base_year: i32) -> Result<PreparedPanel> {
    let data = data.estimation_set();
    if data.firms.is_empty() {
        return Err(Error::EmptyEstimationSet(
            "no firm has two or more observations".into(),
        ));
    }
    let design = translog::design_matrix(&data, base_year)?;
    let raw: Vec<&[f64]> = data
        .firms
        .iter()
        .flat_map(|f| f.observations.iter().map(|o| o.determinants.as_slice()))
        .collect();
    let names = &data.schema.determinants;
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let first = raw[0][j];
        if raw.iter().all(|r| r[j] == first) {
            dropped.push(name.clone());
        } else {
            keep.push(j);
        }
    }
    let z: Vec<Vec<f64>> = raw
        .iter()
        .map(|r| keep.iter().map(|&j| r[j]).collect())
        .collect();
    let kept_names: Vec<String> = keep.iter().map(|&j| names[j].clone()).collect();
    let panel = within_transform(&data, &design, &translog::term_names(), &z, &kept_names)?;
    Ok(PreparedPanel {
        panel,
        base_year,
        dropped_determinants: dropped,
    })
}

/// Pooled least squares of `ỹ` on `x̃`, `δ = 0`, `ln σ_v` from the residual
/// standard deviation and `ln σ_u = ln σ_v`.
pub fn initial_values(panel: &TransformedPanel) -> Result<ParameterVector> {
    let p = panel.n_regressors();
    let n = panel.n_observations();
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut row = 0;
    for block in &panel.firms {
        for t in 0..block.len() {
            x.row_mut(row).copy_from(&block.x_tilde.row(t));
            y[row] = block.y_tilde[t];
            row += 1;
        }
    }

    // modified Gram-Schmidt: a column that is (numerically) spanned by the
    // columns before it is reported as collinear
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut offending = Vec::new();
    for j in 0..p {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut r = col;
        for q in &basis {
            let c = q.dot(&r);
            r -= q * c;
        }
        let rn = r.norm();
        if norm == 0.0 || rn <= 1e-9 * norm {
            offending.push(panel.regressor_names[j].clone());
        } else {
            basis.push(r / rn);
        }
    }
    if !offending.is_empty() {
        return Err(Error::RankDeficient { columns: offending });
    }

    let dof = panel.firms.iter().map(|b| b.len() - 1).sum::<usize>() as isize - p as isize;
    if dof <= 0 {
        return Err(Error::EstimationFailed(format!(
            "{n} observations leave no degrees of freedom for {p} regressors"
        )));
    }
    let beta = x
        .clone()
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| Error::EstimationFailed(e.to_string()))?;
    let resid = &y - &x * &beta;
    let sd = (resid.norm_squared() / dof as f64).sqrt().max(1e-8);
    Ok(ParameterVector::new(
        beta.as_slice(),
        &vec![0.0; panel.n_determinants()],
        sd.ln(),
        sd.ln(),
    ))
}

fn perturbed_start(base: &ParameterVector, seed: u64, index: usize) -> ParameterVector {
    if index == 0 {
        return base.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut values = base.values.clone();
    let nb = base.n_beta;
    for j in nb..nb + base.n_delta {
        let z: f64 = rng.sample(StandardNormal);
        values[j] += 0.3 * z;
    }
    let su = nb + base.n_delta;
    values[su] += rng.random_range(-1.0..1.0);
    values[su + 1] += rng.random_range(-0.5..0.5);
    ParameterVector {
        values,
        ..base.clone()
    }
}

/// One BFGS run maximizing the log-likelihood from `start`.
pub fn maximize_from(
    model: &SfaModel<'_>,
    start: &ParameterVector,
    config: &EstimationConfig,
) -> Result<bfgs::BfgsOutcome> {
    let opts = BfgsOptions {
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
        parameter_tolerance: config.parameter_tolerance,
    };
    let neg = |v: &[f64]| model.loglik(v).map(|l| -l);
    let neg_grad = |v: &[f64]| {
        model
            .gradient(v)
            .map(|g| g.into_iter().map(|x| -x).collect::<Vec<_>>())
    };
    let mut out = bfgs::minimize(neg, neg_grad, &start.values, opts)?;
    out.value = -out.value;
    out.gradient.iter_mut().for_each(|g| *g = -*g);
    out.trace.iter_mut().for_each(|v| *v = -*v);
    if !out.converged && out.value.is_finite() {
        newton_polish(model, &mut out, config)?;
    }
    Ok(out)
}

const POLISH_ITERATIONS: usize = 8;

/// Newton steps with the finite-difference Hessian, used when BFGS stalls
/// short of the gradient tolerance. A step is kept only if it does not
/// lower the log-likelihood and shrinks the largest gradient entry.
fn newton_polish(
    model: &SfaModel<'_>,
    out: &mut bfgs::BfgsOutcome,
    config: &EstimationConfig,
) -> Result<()> {
    for _ in 0..POLISH_ITERATIONS {
        let gmax = gradient_max(&out.gradient);
        if gmax <= config.gradient_tolerance {
            break;
        }
        let h = numdiff::hessian_from_gradient(|v| model.gradient(v), &out.x)?;
        let p = h.len();
        let info = DMatrix::from_fn(p, p, |i, j| -0.5 * (h[i][j] + h[j][i]));
        let Some(chol) = info.cholesky() else {
            break;
        };
        let direction = chol.solve(&DVector::from_column_slice(&out.gradient));
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let trial: Vec<f64> = out
                .x
                .iter()
                .zip(direction.iter())
                .map(|(x, d)| x + step * d)
                .collect();
            if let (Ok(ll), Ok(g)) = (model.loglik(&trial), model.gradient(&trial)) {
                if ll.is_finite()
                    && ll >= out.value - 1e-10 * out.value.abs().max(1.0)
                    && gradient_max(&g) < gmax
                {
                    out.x = trial;
                    out.value = ll;
                    out.gradient = g;
                    out.iterations += 1;
                    out.trace.push(ll);
                    improved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if gradient_max(&out.gradient) <= config.gradient_tolerance {
        out.converged = true;
        out.termination = Termination::GradientTolerance;
    }
    Ok(())
}

fn gradient_max(g: &[f64]) -> f64 {
    g.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Multistart maximization. The best finite optimum wins; ties
/// (`Δ lnL < 1e-8`) go to the smaller gradient.
pub fn maximize(
    panel: &TransformedPanel,
    sign: FrontierSign,
    config: &EstimationConfig,
) -> Result<EstimationResult> {
    config.check()?;
    let model = SfaModel::new(panel, sign);
    let base = initial_values(panel)?;
    let runs: Vec<(usize, Result<bfgs::BfgsOutcome>)> = (0..config.multistart)
        .into_par_iter()
        .map(|i| {
            (
                i,
                maximize_from(&model, &perturbed_start(&base, config.seed, i), config),
            )
        })
        .collect();

    let mut starts = Vec::with_capacity(runs.len());
    let mut best: Option<(usize, bfgs::BfgsOutcome)> = None;
    for (i, run) in runs {
        match run {
            Ok(out) => {
                starts.push(StartSummary {
                    index: i,
                    loglik: Some(out.value),
                    converged: out.converged,
                    iterations: out.iterations,
                    message: format!("{:?}", out.termination),
                });
                if !out.value.is_finite() {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some((_, b)) => {
                        if (out.value - b.value).abs() < 1e-8 {
                            gradient_max(&out.gradient) < gradient_max(&b.gradient)
                        } else {
                            out.value > b.value
                        }
                    }
                };
                if better {
                    best = Some((i, out));
                }
            }
            Err(e) => starts.push(StartSummary {
                index: i,
                loglik: None,
                converged: false,
                iterations: 0,
                message: e.to_string(),
            }),
        }
    }

    let Some((start, out)) = best else {
        let trace: Vec<String> = starts
            .iter()
            .map(|s| format!("start {}: {}", s.index, s.message))
            .collect();
        return Err(Error::EstimationFailed(format!(
            "no start produced a finite likelihood ({})",
            trace.join("; ")
        )));
    };

    let params = model.pack(&out.x)?;
    let se = standard_errors(panel, sign, &params)?;
    Ok(EstimationResult {
        parameter_names: ParameterVector::names(&panel.regressor_names, &panel.determinant_names),
        stderr: se.stderr,
        loglik: out.value,
        converged: out.converged,
        iterations: out.iterations,
        gradient_max: gradient_max(&out.gradient),
        start,
        starts,
        information: se.diagnostics,
        n_firms: panel.firms.len(),
        n_observations: panel.n_observations(),
        params,
    })
}

/// Standard errors from the negative finite-difference Hessian of the
/// log-likelihood, on the packed (log-σ) scale.
pub fn standard_errors(
    panel: &TransformedPanel,
    sign: FrontierSign,
    params: &ParameterVector,
) -> Result<StandardErrors> {
    let model = SfaModel::new(panel, sign);
    let mut h = numdiff::hessian_from_gradient(|v| model.gradient(v), &params.values)?;
    let (asymmetry, scale) = numdiff::asymmetry(&h);
    numdiff::symmetrize(&mut h);
    let p = h.len();
    let info = DMatrix::from_fn(p, p, |i, j| -h[i][j]);
    let eig = info.clone().symmetric_eigen();
    let min_eigenvalue = eig.eigenvalues.min();
    let max_eigenvalue = eig.eigenvalues.max();
    let positive_definite = min_eigenvalue > 0.0 && info.clone().cholesky().is_some();
    let diagnostics = InformationDiagnostics {
        positive_definite,
        min_eigenvalue,
        max_eigenvalue,
        condition_number: positive_definite.then(|| max_eigenvalue / min_eigenvalue),
        asymmetry,
        scale,
    };
    if !positive_definite {
        return Ok(StandardErrors {
            stderr: None,
            covariance: None,
            diagnostics,
        });
    }
    let cov = info
        .cholesky()
        .expect("checked positive definite")
        .inverse();
    let stderr: Vec<f64> = (0..p).map(|j| cov[(j, j)].sqrt()).collect();
    Ok(StandardErrors {
        stderr: Some(stderr),
        covariance: Some(
            (0..p)
                .map(|i| cov.row(i).iter().copied().collect())
                .collect(),
        ),
        diagnostics,
    })
}

/// First-order propagation of a standard error through `g` with
/// derivative `g'(x)`.
pub fn delta_method(stderr: f64, derivative: f64) -> f64 {
    derivative.abs() * stderr
}

/// `σ = exp(ln σ)` and its delta-method standard error.
pub fn sigma_from_log(ln_sigma: f64, stderr: f64) -> (f64, f64) {
    let s = ln_sigma.exp();
    (s, delta_method(stderr, s))
}

/// Percentage reduction `1 − e^δ` in inefficiency and its standard error.
pub fn percentage_effect(delta: f64, stderr: f64) -> (f64, f64) {
    (1.0 - delta.exp(), delta_method(stderr, delta.exp()))
}
