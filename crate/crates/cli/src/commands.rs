use std::fs;
use std::path::{Path, PathBuf};

use frontier_core::estimator::report::{render_markdown, render_text, ReportColumn};
use frontier_core::estimator::{
    maximize, percentage_effect, prepare_panel, EstimationResult, PreparedPanel,
};
use frontier_core::likelihood::{FrontierSign, ParameterVector};
use frontier_core::panel::{load_csv, validate_panel, Category, PanelDataset, ValidationReport};
use frontier_core::postestimation::{
    efficiency_trend, inefficiency_index, recover_fixed_effects, FixedEffectRecord,
    InefficiencyRecord, ALL_GROUP,
};
use frontier_core::simulate::{generate_panel, run_monte_carlo, write_csv, McReport};
use frontier_core::tfp::{
    aggregate, decompose_tfp, render_aggregate_markdown, write_aggregate_csv, write_records_csv,
    AggregateOptions, TfpOptions,
};
use frontier_core::translog::FrontierCoefficients;
use serde::{Deserialize, Serialize};

use crate::config::{Format, RunConfig};
use crate::error::{CliError, CliResult};

/// `1 − e^δ` for one determinant, with its delta-method standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterminantEffect {
    pub name: String,
    pub reduction: f64,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEstimate {
    pub group: String,
    pub category: Option<Category>,
    pub base_year: i32,
    pub frontier: FrontierSign,
    pub dropped_determinants: Vec<String>,
    pub determinant_effects: Vec<DeterminantEffect>,
    pub result: EstimationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFailure {
    pub group: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatesFile {
    pub models: Vec<ModelEstimate>,
    pub failures: Vec<GroupFailure>,
}

fn write(dir: &Path, name: &str, contents: &[u8]) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
}

fn to_json<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn csv_bytes<F>(f: F) -> CliResult<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> frontier_core::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn load_data(cfg: &RunConfig) -> CliResult<PanelDataset> {
    let mut schema = cfg.schema.clone();
    if cfg.pooled {
        schema.category = None;
    }
    Ok(load_csv(cfg.data_path()?, &schema)?)
}

/// `(label, category, data)` per estimation group.
fn groups(cfg: &RunConfig, data: &PanelDataset) -> Vec<(String, Option<Category>, PanelDataset)> {
    if cfg.pooled || data.schema.category.is_none() {
        return vec![(ALL_GROUP.to_string(), None, data.clone())];
    }
    data.categories()
        .into_iter()
        .map(|c| (c.to_string(), Some(c), data.subset(c)))
        .collect()
}

fn base_year(cfg: &RunConfig, data: &PanelDataset) -> CliResult<i32> {
    cfg.base_year
        .or_else(|| data.first_year())
        .ok_or_else(|| CliError::Data("the data set is empty".into()))
}

pub fn cmd_validate(cfg: &RunConfig) -> CliResult<ValidationReport> {
    let data = load_data(cfg)?;
    Ok(validate_panel(&data)?)
}

fn determinant_effects(result: &EstimationResult) -> Vec<DeterminantEffect> {
    result
        .parameter_names
        .iter()
        .enumerate()
        .filter_map(|(j, name)| {
            let d = name.strip_prefix("delta_")?;
            let se = result.stderr.as_ref().map(|s| s[j]);
            let (reduction, stderr) =
                percentage_effect(result.params.values[j], se.unwrap_or(f64::NAN));
            Some(DeterminantEffect {
                name: d.to_string(),
                reduction,
                stderr: se.map(|_| stderr),
            })
        })
        .collect()
}

struct Fitted {
    estimate: ModelEstimate,
    prepared: PreparedPanel,
}

pub fn cmd_estimate(cfg: &RunConfig) -> CliResult<EstimatesFile> {
    let data = load_data(cfg)?;
    let base = base_year(cfg, &data)?;
    let sign = cfg.sign();
    let mut fitted = Vec::new();
    let mut failures = Vec::new();
    for (group, category, subset) in groups(cfg, &data) {
        let attempt = prepare_panel(&subset, base).and_then(|prepared| {
            maximize(&prepared.panel, sign, &cfg.estimation).map(|result| (prepared, result))
        });
        match attempt {
            Ok((prepared, result)) if result.converged => fitted.push(Fitted {
                estimate: ModelEstimate {
                    group,
                    category,
                    base_year: base,
                    frontier: sign,
                    dropped_determinants: prepared.dropped_determinants.clone(),
                    determinant_effects: determinant_effects(&result),
                    result,
                },
                prepared,
            }),
            Ok((_, result)) => failures.push(GroupFailure {
                group,
                message: format!(
                    "not converged after {} iterations (max |g| = {:.3e})",
                    result.iterations, result.gradient_max
                ),
            }),
            Err(e) => failures.push(GroupFailure {
                group,
                message: e.to_string(),
            }),
        }
    }
    for f in &failures {
        eprintln!("{}: {}", f.group, f.message);
    }
    if fitted.is_empty() {
        let all: Vec<String> = failures
            .iter()
            .map(|f| format!("{}: {}", f.group, f.message))
            .collect();
        return Err(CliError::Convergence(all.join("; ")));
    }

    let mut inefficiency: Vec<(String, InefficiencyRecord)> = Vec::new();
    let mut fixed: Vec<(String, FixedEffectRecord)> = Vec::new();
    for f in &fitted {
        let params = &f.estimate.result.params;
        for r in inefficiency_index(&f.prepared.panel, params, sign)? {
            inefficiency.push((f.estimate.group.clone(), r));
        }
        for r in recover_fixed_effects(&f.prepared.panel, params, sign, cfg.fixed_effect_formula())?
        {
            fixed.push((f.estimate.group.clone(), r));
        }
    }

    let file = EstimatesFile {
        models: fitted.into_iter().map(|f| f.estimate).collect(),
        failures,
    };
    let columns: Vec<ReportColumn> = file
        .models
        .iter()
        .map(|m| ReportColumn::from_result(m.group.clone(), &m.result))
        .collect();
    let text = render_text(&columns);
    print!("{text}");

    let out = &cfg.out;
    if cfg.wants(Format::Json) {
        write(out, "estimates.json", &to_json(&file)?)?;
    }
    if cfg.wants(Format::Md) {
        write(out, "estimates.md", render_markdown(&columns).as_bytes())?;
        write(out, "estimates.txt", text.as_bytes())?;
    }
    if cfg.wants(Format::Csv) {
        write(out, "inefficiency.csv", &inefficiency_csv(&inefficiency)?)?;
        write(out, "fixed_effects.csv", &fixed_effects_csv(&fixed)?)?;
        let records: Vec<InefficiencyRecord> = inefficiency.into_iter().map(|(_, r)| r).collect();
        write(out, "efficiency_trend.csv", &trend_csv(&records)?)?;
    }
    Ok(file)
}

fn category_cell(c: Option<Category>) -> String {
    c.map(|c| c.to_string()).unwrap_or_default()
}

fn inefficiency_csv(rows: &[(String, InefficiencyRecord)]) -> CliResult<Vec<u8>> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record([
            "group",
            "firm_id",
            "category",
            "year",
            "u_hat",
            "u_star_hat",
            "te_score",
            "h",
        ])?;
        for (g, r) in rows {
            w.write_record([
                g.clone(),
                r.firm_id.clone(),
                category_cell(r.category),
                r.year.to_string(),
                r.u_hat.to_string(),
                r.u_star_hat.to_string(),
                r.te_score.to_string(),
                r.h.to_string(),
            ])?;
        }
        w.flush()
            .map_err(|e| frontier_core::Error::io("<csv output>", e))
    })
}

fn fixed_effects_csv(rows: &[(String, FixedEffectRecord)]) -> CliResult<Vec<u8>> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["group", "firm_id", "category", "alpha_hat", "mu2", "sigma2"])?;
        for (g, r) in rows {
            w.write_record([
                g.clone(),
                r.firm_id.clone(),
                category_cell(r.category),
                r.alpha_hat.to_string(),
                r.mu2.to_string(),
                r.sigma2.to_string(),
            ])?;
        }
        w.flush()
            .map_err(|e| frontier_core::Error::io("<csv output>", e))
    })
}

fn trend_csv(records: &[InefficiencyRecord]) -> CliResult<Vec<u8>> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        for row in efficiency_trend(records) {
            w.serialize(row)?;
        }
        w.flush()
            .map_err(|e| frontier_core::Error::io("<csv output>", e))
    })
}

pub fn cmd_decompose(cfg: &RunConfig, estimates: Option<&Path>) -> CliResult<()> {
    let path: PathBuf = estimates
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.out.join("estimates.json"));
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let file: EstimatesFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let data = load_data(cfg)?;
    let mut records = Vec::new();
    for model in &file.models {
        let subset = match model.category {
            Some(c) if data.schema.category.is_some() => data.subset(c),
            Some(c) => {
                return Err(CliError::Data(format!(
                    "estimates are for category {c} but no category column is bound"
                )))
            }
            None => data.clone(),
        };
        let prepared = prepare_panel(&subset, model.base_year)?;
        let names = ParameterVector::names(
            &prepared.panel.regressor_names,
            &prepared.panel.determinant_names,
        );
        if names != model.result.parameter_names {
            return Err(CliError::Data(format!(
                "estimate/schema mismatch for {}: estimates have [{}], data give [{}]",
                model.group,
                model.result.parameter_names.join(", "),
                names.join(", ")
            )));
        }
        let params = &model.result.params;
        let ineff = inefficiency_index(&prepared.panel, params, model.frontier)?;
        let beta = FrontierCoefficients::from_slice(params.beta())?;
        let options = TfpOptions {
            base_year: model.base_year,
            technical_change: cfg.technical_change.into(),
            dte: cfg.dte_variant(),
        };
        records.extend(decompose_tfp(&beta, &subset, &ineff, &options)?);
    }
    let rows = aggregate(
        &records,
        &AggregateOptions {
            boundary: cfg.boundary,
            weighting: cfg.weighting(),
        },
    );
    let markdown = render_aggregate_markdown(&rows);
    print!("{markdown}");
    let out = &cfg.out;
    if cfg.wants(Format::Csv) {
        write(
            out,
            "tfp_records.csv",
            &csv_bytes(|b| write_records_csv(&records, b))?,
        )?;
        write(
            out,
            "tfp_aggregate.csv",
            &csv_bytes(|b| write_aggregate_csv(&rows, b))?,
        )?;
    }
    if cfg.wants(Format::Md) {
        write(out, "tfp_aggregate.md", markdown.as_bytes())?;
    }
    if cfg.wants(Format::Json) {
        write(out, "tfp_aggregate.json", &to_json(&rows)?)?;
    }
    Ok(())
}

pub fn cmd_simulate(cfg: &RunConfig, panel_only: bool) -> CliResult<Option<McReport>> {
    let sim = &cfg.simulation;
    if panel_only {
        let panel = generate_panel(&sim.dgp)?;
        write(
            &cfg.out,
            "panel.csv",
            &csv_bytes(|b| write_csv(&panel.dataset, b))?,
        )?;
        println!("wrote {}", cfg.out.join("panel.csv").display());
        return Ok(None);
    }
    if sim.replications < 2 {
        return Err(CliError::Usage(format!(
            "replications must be at least 2, got {}",
            sim.replications
        )));
    }
    let report = run_monte_carlo(&sim.dgp, sim.replications, &cfg.estimation)?;
    let text = report.render_text();
    print!("{text}");
    if cfg.wants(Format::Json) {
        write(&cfg.out, "mc_report.json", &to_json(&report)?)?;
    }
    write(&cfg.out, "mc_report.txt", text.as_bytes())?;
    Ok(Some(report))
}
