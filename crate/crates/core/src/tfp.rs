//! Divisia productivity change between consecutive observations of a firm
//! and its split into technical change, efficiency change, scale effect
//! and price effect:
//!
//! ```text
//! TFP = ΔT + ΔTE + (Γ − 1)·Σ (γ_n/Γ)·ẋ_n + Σ (γ_n/Γ − S_n)·ẋ_n
//! ```
//!
//! Elasticities and `ΔT` are taken at the midpoint of each pair (mean log
//! inputs, mean `t`) and expenditure shares are the mean of the two
//! observations' shares.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Category, FirmPanel, PanelDataset};
use crate::postestimation::{InefficiencyRecord, ALL_GROUP};
use crate::translog::{
    elasticities_at, returns_to_scale, technical_change, FrontierCoefficients, TechnicalChange,
    N_INPUTS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DteVariant {
    /// `−û*_i·(h_t − h_{t−1})/Δt`.
    #[default]
    Corrected,
    /// `−û_it·(h_t − h_{t−1})/Δt`.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TfpOptions {
    pub base_year: i32,
    pub technical_change: TechnicalChange,
    pub dte: DteVariant,
}

impl Default for TfpOptions {
    fn default() -> Self {
        TfpOptions {
            base_year: 2000,
            technical_change: TechnicalChange::default(),
            dte: DteVariant::default(),
        }
    }
}

/// Log growth per year between two observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthRates {
    pub year_from: i32,
    pub year_to: i32,
    pub y_dot: f64,
    pub x_dot: [f64; N_INPUTS],
}

pub fn growth_rates(firm: &FirmPanel) -> Result<Vec<GrowthRates>> {
    if firm.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "firm `{}` needs two observations for growth rates",
            firm.firm_id
        )));
    }
    Ok(firm
        .observations
        .windows(2)
        .map(|w| {
            let span = f64::from(w[1].year - w[0].year);
            let rate = |a: f64, b: f64| (b.ln() - a.ln()) / span;
            GrowthRates {
                year_from: w[0].year,
                year_to: w[1].year,
                y_dot: rate(w[0].output, w[1].output),
                x_dot: std::array::from_fn(|n| rate(w[0].inputs[n], w[1].inputs[n])),
            }
        })
        .collect())
}

/// `S_n = w_n x_n / Σ_m w_m x_m`.
pub fn expenditure_shares(inputs: &[f64], prices: &[f64]) -> Result<[f64; N_INPUTS]> {
    if inputs.len() != N_INPUTS || prices.len() != N_INPUTS {
        return Err(Error::InvalidArgument(format!(
            "expected {N_INPUTS} inputs and prices, got {} and {}",
            inputs.len(),
            prices.len()
        )));
    }
    let spend: [f64; N_INPUTS] = std::array::from_fn(|n| inputs[n] * prices[n]);
    let total: f64 = spend.iter().sum();
    if !(total > 0.0) || spend.iter().any(|s| *s < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "expenditures {spend:?} do not give valid shares"
        )));
    }
    Ok(spend.map(|s| s / total))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfpRecord {
    pub firm_id: String,
    pub category: Option<Category>,
    pub year_from: i32,
    pub year_to: i32,
    /// Output level at `year_to`, used for output weighting.
    pub output: f64,
    /// `ΔT + ΔTE + Ψ + Ω`.
    pub tfp_dot: f64,
    pub delta_t: f64,
    pub delta_te: f64,
    pub scale_effect: f64,
    pub price_effect: f64,
    pub gamma: [f64; N_INPUTS],
    pub returns_to_scale: f64,
    pub shares: [f64; N_INPUTS],
    pub x_dot: [f64; N_INPUTS],
    pub y_dot: f64,
    /// `ẏ − Σ S_n ẋ_n` from the data alone.
    pub tfp_divisia: f64,
    /// Set when `Γ = 0`, which leaves the scale and price effects undefined.
    pub flagged: bool,
}

/// Decomposes every consecutive pair of one firm. `inefficiency` must hold a
/// record for each of the firm's years.
pub fn decompose_firm(
    beta: &FrontierCoefficients,
    firm: &FirmPanel,
    inefficiency: &HashMap<(&str, i32), &InefficiencyRecord>,
    options: &TfpOptions,
) -> Result<Vec<TfpRecord>> {
    let rates = growth_rates(firm)?;
    let lookup = |year: i32| {
        inefficiency
            .get(&(firm.firm_id.as_str(), year))
            .copied()
            .ok_or_else(|| {
                Error::Misaligned(format!(
                    "no inefficiency estimate for firm `{}` in {year}",
                    firm.firm_id
                ))
            })
    };
    let mut out = Vec::with_capacity(rates.len());
    for (w, g) in firm.observations.windows(2).zip(rates) {
        let (prev, curr) = (&w[0], &w[1]);
        let shares_of = |o: &crate::panel::Observation| match &o.prices {
            Some(p) => expenditure_shares(&o.inputs, p),
            None => Err(Error::Schema(format!(
                "prices missing for firm `{}` in {}",
                o.firm_id, o.year
            ))),
        };
        let (s0, s1) = (shares_of(prev)?, shares_of(curr)?);
        let shares: [f64; N_INPUTS] = std::array::from_fn(|n| 0.5 * (s0[n] + s1[n]));
        let ln_mid: [f64; N_INPUTS] =
            std::array::from_fn(|n| 0.5 * (prev.inputs[n].ln() + curr.inputs[n].ln()));
        let t_mid = 0.5 * f64::from(prev.year + curr.year - 2 * options.base_year);
        let gamma = elasticities_at(beta, &ln_mid, t_mid);
        let big_gamma = returns_to_scale(&gamma);
        let delta_t = technical_change(beta, &ln_mid, t_mid, options.technical_change);

        let (r0, r1) = (lookup(prev.year)?, lookup(curr.year)?);
        let span = f64::from(curr.year - prev.year);
        let level = match options.dte {
            DteVariant::Corrected => r1.u_star_hat,
            DteVariant::Literal => r1.u_hat,
        };
        let delta_te = -level * (r1.h - r0.h) / span;

        let flagged = big_gamma == 0.0;
        let (scale_effect, price_effect) = if flagged {
            (f64::NAN, f64::NAN)
        } else {
            let normalized: [f64; N_INPUTS] = std::array::from_fn(|n| gamma[n] / big_gamma);
            (
                (big_gamma - 1.0)
                    * (0..N_INPUTS)
                        .map(|n| normalized[n] * g.x_dot[n])
                        .sum::<f64>(),
                (0..N_INPUTS)
                    .map(|n| (normalized[n] - shares[n]) * g.x_dot[n])
                    .sum::<f64>(),
            )
        };
        out.push(TfpRecord {
            firm_id: firm.firm_id.clone(),
            category: firm.category,
            year_from: prev.year,
            year_to: curr.year,
            output: curr.output,
            tfp_dot: delta_t + delta_te + scale_effect + price_effect,
            delta_t,
            delta_te,
            scale_effect,
            price_effect,
            gamma,
            returns_to_scale: big_gamma,
            shares,
            x_dot: g.x_dot,
            y_dot: g.y_dot,
            tfp_divisia: g.y_dot - (0..N_INPUTS).map(|n| shares[n] * g.x_dot[n]).sum::<f64>(),
            flagged,
        });
    }
    Ok(out)
}

/// Decomposition for every firm with two or more observations, in firm then
/// year order.
pub fn decompose_tfp(
    beta: &FrontierCoefficients,
    data: &PanelDataset,
    inefficiency: &[InefficiencyRecord],
    options: &TfpOptions,
) -> Result<Vec<TfpRecord>> {
    if data.schema.prices.is_empty() {
        return Err(Error::Schema(
            "price columns are required for the productivity decomposition".into(),
        ));
    }
    let index: HashMap<(&str, i32), &InefficiencyRecord> = inefficiency
        .iter()
        .map(|r| ((r.firm_id.as_str(), r.year), r))
        .collect();
    let per_firm: Vec<Result<Vec<TfpRecord>>> = data
        .firms
        .par_iter()
        .filter(|f| f.len() >= 2)
        .map(|f| decompose_firm(beta, f, &index, options))
        .collect();
    let mut out = Vec::new();
    for r in per_firm {
        out.extend(r?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Unweighted,
    /// Weights by output in the later year of each pair.
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregateOptions {
    /// Pairs ending in or before this year form the first period.
    pub boundary: i32,
    pub weighting: Weighting,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        AggregateOptions {
            boundary: 2004,
            weighting: Weighting::Unweighted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub group: String,
    /// `2000-01` for a year pair, `mean_2000-04` for a period.
    pub label: String,
    pub tfp: f64,
    pub delta_t: f64,
    pub delta_te: f64,
    pub scale_effect: f64,
    pub price_effect: f64,
    pub returns_to_scale: f64,
    pub records: usize,
    /// Records left out because `Γ = 0`.
    pub excluded: usize,
}

fn span_label(from: i32, to: i32) -> String {
    format!("{from}-{:02}", to.rem_euclid(100))
}

#[derive(Default)]
struct Accumulator {
    weight: f64,
    sums: [f64; 6],
    records: usize,
    excluded: usize,
}

impl Accumulator {
    fn add(&mut self, r: &TfpRecord, weighting: Weighting) {
        if r.flagged {
            self.excluded += 1;
            return;
        }
        let w = match weighting {
            Weighting::Unweighted => 1.0,
            Weighting::Output => r.output,
        };
        let values = [
            r.tfp_dot,
            r.delta_t,
            r.delta_te,
            r.scale_effect,
            r.price_effect,
            r.returns_to_scale,
        ];
        for (s, v) in self.sums.iter_mut().zip(values) {
            *s += w * v;
        }
        self.weight += w;
        self.records += 1;
    }

    fn row(&self, group: &str, label: String) -> Option<AggregateRow> {
        if self.records == 0 {
            return None;
        }
        let m = self.sums.map(|s| s / self.weight);
        Some(AggregateRow {
            group: group.to_string(),
            label,
            tfp: m[0],
            delta_t: m[1],
            delta_te: m[2],
            scale_effect: m[3],
            price_effect: m[4],
            returns_to_scale: m[5],
            records: self.records,
            excluded: self.excluded,
        })
    }
}

/// Per-year and per-period means of each component, for every category and
/// for all records together. Groups with no usable record are omitted.
pub fn aggregate(records: &[TfpRecord], options: &AggregateOptions) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(u8, String), Vec<&TfpRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((1, ALL_GROUP.to_string()))
            .or_default()
            .push(r);
        if let Some(c) = r.category {
            groups.entry((0, c.to_string())).or_default().push(r);
        }
    }
    let mut rows = Vec::new();
    for ((_, group), recs) in groups {
        let mut by_year: BTreeMap<(i32, i32), Accumulator> = BTreeMap::new();
        for r in &recs {
            by_year
                .entry((r.year_to, r.year_from))
                .or_default()
                .add(r, options.weighting);
        }
        rows.extend(
            by_year
                .iter()
                .filter_map(|(&(to, from), acc)| acc.row(&group, span_label(from, to))),
        );

        let first = recs
            .iter()
            .map(|r| r.year_from)
            .min()
            .unwrap_or(options.boundary);
        let last = recs
            .iter()
            .map(|r| r.year_to)
            .max()
            .unwrap_or(options.boundary);
        let mut early = Accumulator::default();
        let mut late = Accumulator::default();
        for r in &recs {
            if r.year_to <= options.boundary {
                early.add(r, options.weighting);
            } else {
                late.add(r, options.weighting);
            }
        }
        rows.extend(early.row(
            &group,
            format!("mean_{}", span_label(first, options.boundary)),
        ));
        rows.extend(late.row(
            &group,
            format!("mean_{}", span_label(options.boundary, last)),
        ));
    }
    rows
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        "NA".into()
    }
}

pub fn write_records_csv<W: Write>(records: &[TfpRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "firm_id",
        "category",
        "year_from",
        "year_to",
        "tfp",
        "delta_t",
        "delta_te",
        "scale_effect",
        "price_effect",
        "gamma_K",
        "gamma_L",
        "gamma_F",
        "returns_to_scale",
        "share_K",
        "share_L",
        "share_F",
        "xdot_K",
        "xdot_L",
        "xdot_F",
        "ydot",
        "tfp_divisia",
        "flagged",
    ])?;
    for r in records {
        let mut row = vec![
            r.firm_id.clone(),
            r.category.map(|c| c.to_string()).unwrap_or_default(),
            r.year_from.to_string(),
            r.year_to.to_string(),
        ];
        row.extend(
            [
                r.tfp_dot,
                r.delta_t,
                r.delta_te,
                r.scale_effect,
                r.price_effect,
            ]
            .into_iter()
            .chain(r.gamma)
            .chain([r.returns_to_scale])
            .chain(r.shares)
            .chain(r.x_dot)
            .chain([r.y_dot, r.tfp_divisia])
            .map(cell),
        );
        row.push(r.flagged.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

/// Markdown table: one block of rows per group with columns TFP, ΔT, ΔTE,
/// Ψ, Ω and Γ.
pub fn render_aggregate_markdown(rows: &[AggregateRow]) -> String {
    let mut out = String::new();
    out.push_str("| Group | Years | TFP | ΔT | ΔTE | Ψ | Ω | Γ |\n");
    out.push_str("|---|---|---:|---:|---:|---:|---:|---:|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {:.3} |",
            r.group,
            r.label,
            r.tfp,
            r.delta_t,
            r.delta_te,
            r.scale_effect,
            r.price_effect,
            r.returns_to_scale
        );
    }
    let excluded: usize = rows
        .iter()
        .filter(|r| r.group == ALL_GROUP && !r.label.starts_with("mean_"))
        .map(|r| r.excluded)
        .sum();
    out.push_str("\nMean year-on-year changes.\n");
    if excluded > 0 {
        let _ = writeln!(
            out,
            "{excluded} records with zero returns to scale excluded."
        );
    }
    out
}
