//! Synthetic panels from the scaled half-normal frontier model and a
//! Monte Carlo harness for parameter recovery.
//!
//! Log inputs are correlated Gaussians with unit variances. Determinants
//! are drawn per firm-year from [`DeterminantLaw`]. Fixed effects are
//! `α_i ~ alpha_scale · N(0, 1)` and `u*_i = |N(0, σ_u²)|`.

pub mod oracle;
pub mod quadrature;

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{maximize, prepare_panel, EstimationConfig};
use crate::likelihood::{FrontierSign, ParameterVector};
use crate::panel::{Category, Observation, PanelDataset, VariableSchema};
use crate::translog::{log_frontier, term_names, FrontierCoefficients, N_INPUTS, N_TERMS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law")]
pub enum DeterminantLaw {
    /// `year − base_year`.
    Trend,
    /// `(year − base_year)²`.
    TrendSquared,
    /// Bernoulli draw per firm-year.
    Dummy { probability: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Determinant {
    pub name: String,
    #[serde(flatten)]
    pub law: DeterminantLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpSpec {
    pub firms: usize,
    pub periods: usize,
    /// When set, each firm is observed for a uniformly drawn number of
    /// consecutive years between `min_periods` and `periods`.
    pub min_periods: Option<usize>,
    pub base_year: i32,
    pub beta: Vec<f64>,
    pub determinants: Vec<Determinant>,
    pub delta: Vec<f64>,
    pub sigma_u: f64,
    pub sigma_v: f64,
    pub alpha_scale: f64,
    /// Common pairwise correlation of the log inputs.
    pub input_correlation: f64,
    pub input_means: [f64; N_INPUTS],
    pub frontier: FrontierSign,
    /// Firms are assigned to these categories round-robin.
    pub categories: Vec<Category>,
    pub seed: u64,
}

impl Default for DgpSpec {
    fn default() -> Self {
        DgpSpec {
            firms: 100,
            periods: 10,
            min_periods: None,
            base_year: 2000,
            beta: vec![
                0.3, 0.4, 0.3, 0.02, 0.05, 0.04, 0.03, -0.02, -0.01, -0.015, -0.002, 0.005, -0.004,
                0.003,
            ],
            determinants: vec![
                Determinant {
                    name: "trend".into(),
                    law: DeterminantLaw::Trend,
                },
                Determinant {
                    name: "owner".into(),
                    law: DeterminantLaw::Dummy { probability: 0.4 },
                },
            ],
            delta: vec![0.08, -0.5],
            sigma_u: 0.6,
            sigma_v: 0.2,
            alpha_scale: 1.0,
            input_correlation: 0.3,
            input_means: [2.0, 1.5, 1.0],
            frontier: FrontierSign::Production,
            categories: Vec::new(),
            seed: 1,
        }
    }
}

impl DgpSpec {
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.firms == 0 || self.periods < 2 {
            return bad("need at least one firm and two periods".into());
        }
        if let Some(m) = self.min_periods {
            if m == 0 || m > self.periods {
                return bad(format!("min_periods {m} outside 1..={}", self.periods));
            }
        }
        if self.beta.len() != N_TERMS {
            return bad(format!(
                "beta has {} entries, expected {N_TERMS}",
                self.beta.len()
            ));
        }
        if self.delta.len() != self.determinants.len() {
            return bad(format!(
                "{} delta values for {} determinants",
                self.delta.len(),
                self.determinants.len()
            ));
        }
        if !(self.sigma_u >= 0.0 && self.sigma_v > 0.0) {
            return bad("sigma_u must be non-negative and sigma_v positive".into());
        }
        if !(-0.5 < self.input_correlation && self.input_correlation < 1.0) {
            return bad("input_correlation must lie in (-0.5, 1)".into());
        }
        for d in &self.determinants {
            if let DeterminantLaw::Dummy { probability } = d.law {
                if !(0.0..=1.0).contains(&probability) {
                    return bad(format!("probability of `{}` outside [0, 1]", d.name));
                }
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> VariableSchema {
        VariableSchema {
            firm: "firm".into(),
            year: "year".into(),
            output: "y".into(),
            inputs: vec!["K".into(), "L".into(), "F".into()],
            determinants: self.determinants.iter().map(|d| d.name.clone()).collect(),
            prices: vec!["wK".into(), "wL".into(), "wF".into()],
            category: (!self.categories.is_empty()).then(|| "category".into()),
        }
    }

    /// True parameters in estimation packing (`β`, `δ`, `ln σ_u`, `ln σ_v`).
    pub fn truth(&self) -> ParameterVector {
        ParameterVector::new(
            &self.beta,
            &self.delta,
            self.sigma_u.ln(),
            self.sigma_v.ln(),
        )
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let names: Vec<String> = self.determinants.iter().map(|d| d.name.clone()).collect();
        ParameterVector::names(&term_names(), &names)
    }
}

/// Generated dataset with the latent quantities kept for comparison.
#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    pub dataset: PanelDataset,
    pub alpha: Vec<f64>,
    pub u_star: Vec<f64>,
    /// `u_it` per firm, aligned with the firm's observations.
    pub u: Vec<Vec<f64>>,
}

pub fn generate_panel(spec: &DgpSpec) -> Result<SimulatedPanel> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    generate_with(spec, &mut rng)
}

fn generate_with(spec: &DgpSpec, rng: &mut ChaCha8Rng) -> Result<SimulatedPanel> {
    spec.check()?;
    let beta = FrontierCoefficients::from_slice(&spec.beta)?;
    let rho = spec.input_correlation;
    let corr = DMatrix::from_fn(N_INPUTS, N_INPUTS, |i, j| if i == j { 1.0 } else { rho });
    let chol = corr
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("input correlation not positive definite".into()))?
        .l();
    let noise_sign = match spec.frontier {
        FrontierSign::Production => -1.0,
        FrontierSign::Cost => 1.0,
    };

    let mut observations = Vec::new();
    let mut alpha = Vec::with_capacity(spec.firms);
    let mut u_star = Vec::with_capacity(spec.firms);
    let mut u_all = Vec::with_capacity(spec.firms);
    for i in 0..spec.firms {
        let t_len = match spec.min_periods {
            Some(m) => rng.random_range(m..=spec.periods),
            None => spec.periods,
        };
        let offset = rng.random_range(0..=spec.periods - t_len);
        let a = spec.alpha_scale * rng.sample::<f64, _>(StandardNormal);
        let us = spec.sigma_u * rng.sample::<f64, _>(StandardNormal).abs();
        let category =
            (!spec.categories.is_empty()).then(|| spec.categories[i % spec.categories.len()]);
        let firm_id = format!("F{:04}", i + 1);
        let mut u_firm = Vec::with_capacity(t_len);
        for s in 0..t_len {
            let t = (offset + s) as f64;
            let e = DVector::from_fn(N_INPUTS, |_, _| rng.sample::<f64, _>(StandardNormal));
            let shock = &chol * e;
            let ln_x: [f64; N_INPUTS] = std::array::from_fn(|n| spec.input_means[n] + shock[n]);
            let z: Vec<f64> = spec
                .determinants
                .iter()
                .map(|d| match d.law {
                    DeterminantLaw::Trend => t,
                    DeterminantLaw::TrendSquared => t * t,
                    DeterminantLaw::Dummy { probability } => {
                        f64::from(u8::from(rng.random_bool(probability)))
                    }
                })
                .collect();
            let index: f64 = z.iter().zip(&spec.delta).map(|(z, d)| z * d).sum();
            let u = index.exp() * us;
            let v = spec.sigma_v * rng.sample::<f64, _>(StandardNormal);
            let ln_y = a + log_frontier(&beta, &ln_x, t) + v + noise_sign * u;
            let prices: Vec<f64> = (0..N_INPUTS)
                .map(|_| (0.3 * rng.sample::<f64, _>(StandardNormal)).exp())
                .collect();
            u_firm.push(u);
            observations.push(Observation {
                firm_id: firm_id.clone(),
                year: spec.base_year + (offset + s) as i32,
                output: ln_y.exp(),
                inputs: ln_x.iter().map(|l| l.exp()).collect(),
                determinants: z,
                prices: Some(prices),
                category,
            });
        }
        alpha.push(a);
        u_star.push(us);
        u_all.push(u_firm);
    }
    Ok(SimulatedPanel {
        dataset: PanelDataset::from_observations(spec.schema(), observations)?,
        alpha,
        u_star,
        u: u_all,
    })
}

/// Writes a dataset as CSV using its schema's column names.
pub fn write_csv<W: Write>(data: &PanelDataset, writer: W) -> Result<()> {
    let schema = &data.schema;
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        schema.firm.clone(),
        schema.year.clone(),
        schema.output.clone(),
    ];
    header.extend(schema.inputs.iter().cloned());
    header.extend(schema.determinants.iter().cloned());
    header.extend(schema.prices.iter().cloned());
    header.extend(schema.category.iter().cloned());
    w.write_record(&header)?;
    for firm in &data.firms {
        for o in &firm.observations {
            let mut row = vec![o.firm_id.clone(), o.year.to_string(), o.output.to_string()];
            row.extend(o.inputs.iter().map(f64::to_string));
            row.extend(o.determinants.iter().map(f64::to_string));
            if !schema.prices.is_empty() {
                match &o.prices {
                    Some(p) => row.extend(p.iter().map(f64::to_string)),
                    None => row.extend(schema.prices.iter().map(|_| "NA".to_string())),
                }
            }
            if schema.category.is_some() {
                row.push(o.category.map(|c| c.to_string()).unwrap_or_default());
            }
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    /// Standard error of the mean estimate across replications.
    pub mc_stderr: f64,
    pub rmse: f64,
    /// Share of replications whose ±1.96·stderr interval covers the truth,
    /// over replications that produced standard errors.
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub replications: usize,
    pub successes: usize,
    pub failures: usize,
    pub failure_messages: Vec<String>,
    pub parameters: Vec<ParameterSummary>,
}

impl McReport {
    pub fn parameter(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "replications: {}  successes: {}  failures: {}",
            self.replications, self.successes, self.failures
        );
        let _ = writeln!(
            out,
            "{:<16}{:>11}{:>11}{:>11}{:>11}{:>11}{:>10}",
            "parameter", "truth", "mean", "bias", "mc_se", "rmse", "coverage"
        );
        for p in &self.parameters {
            let cov = p.coverage.map_or("n/a".to_string(), |c| format!("{c:.3}"));
            let _ = writeln!(
                out,
                "{:<16}{:>11.5}{:>11.5}{:>11.5}{:>11.5}{:>11.5}{:>10}",
                p.name, p.truth, p.mean, p.bias, p.mc_stderr, p.rmse, cov
            );
        }
        out
    }
}

/// Share of failed replications above which the study is abandoned.
pub const MAX_FAILURE_RATE: f64 = 0.1;

/// One replication: `(estimates, standard errors)` on the packed scale.
fn replicate(
    spec: &DgpSpec,
    index: usize,
    config: &EstimationConfig,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let sim = generate_with(spec, &mut rng)?;
    let prepared = prepare_panel(&sim.dataset, spec.base_year)?;
    if !prepared.dropped_determinants.is_empty() {
        return Err(Error::EstimationFailed(format!(
            "determinants without variation: {}",
            prepared.dropped_determinants.join(", ")
        )));
    }
    let result = maximize(&prepared.panel, spec.frontier, config)?;
    if !result.converged {
        return Err(Error::EstimationFailed(format!(
            "not converged (max |g| = {:.3e})",
            result.gradient_max
        )));
    }
    Ok((result.params.values, result.stderr))
}

/// Generates and estimates `replications` panels in parallel. Replication
/// `r` draws from stream `r + 1` of the spec seed.
pub fn run_monte_carlo(
    spec: &DgpSpec,
    replications: usize,
    config: &EstimationConfig,
) -> Result<McReport> {
    spec.check()?;
    config.check()?;
    if replications < 2 {
        return Err(Error::InvalidArgument(
            "at least two replications are required".into(),
        ));
    }
    let runs: Vec<Result<(Vec<f64>, Option<Vec<f64>>)>> = (0..replications)
        .into_par_iter()
        .map(|r| replicate(spec, r, config))
        .collect();

    let mut estimates = Vec::new();
    let mut failure_messages = Vec::new();
    for (r, run) in runs.into_iter().enumerate() {
        match run {
            Ok(e) => estimates.push(e),
            Err(e) => failure_messages.push(format!("replication {r}: {e}")),
        }
    }
    let failures = failure_messages.len();
    if failures as f64 > MAX_FAILURE_RATE * replications as f64 {
        return Err(Error::EstimationFailed(format!(
            "{failures} of {replications} replications failed; first: {}",
            failure_messages[0]
        )));
    }

    let truth = spec.truth();
    let n = estimates.len() as f64;
    let parameters = spec
        .parameter_names()
        .into_iter()
        .enumerate()
        .map(|(j, name)| {
            let theta = truth.values[j];
            let mean = estimates.iter().map(|(e, _)| e[j]).sum::<f64>() / n;
            let var = estimates
                .iter()
                .map(|(e, _)| (e[j] - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0);
            let mse = estimates
                .iter()
                .map(|(e, _)| (e[j] - theta).powi(2))
                .sum::<f64>()
                / n;
            let with_se: Vec<bool> = estimates
                .iter()
                .filter_map(|(e, se)| se.as_ref().map(|s| (e[j] - theta).abs() <= 1.96 * s[j]))
                .collect();
            let coverage = (!with_se.is_empty())
                .then(|| with_se.iter().filter(|&&c| c).count() as f64 / with_se.len() as f64);
            ParameterSummary {
                name,
                truth: theta,
                mean,
                bias: mean - theta,
                mc_stderr: (var / n).sqrt(),
                rmse: mse.sqrt(),
                coverage,
            }
        })
        .collect();
    Ok(McReport {
        replications,
        successes: estimates.len(),
        failures,
        failure_messages,
        parameters,
    })
}
