//! Unbalanced firm-year panels: ingestion, validation and the within
//! (firm-demeaning) transformation.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Firm class used for per-category estimation and reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Coal,
    Gas,
    Mixed,
    TnD,
    Integrated,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Coal,
        Category::Gas,
        Category::Mixed,
        Category::TnD,
        Category::Integrated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Coal => "Coal",
            Category::Gas => "Gas",
            Category::Mixed => "Mixed",
            Category::TnD => "TnD",
            Category::Integrated => "Integrated",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coal" => Ok(Category::Coal),
            "gas" => Ok(Category::Gas),
            "mixed" => Ok(Category::Mixed),
            "tnd" | "t&d" | "t_d" | "distribution" => Ok(Category::TnD),
            "integrated" | "integr." | "integr" => Ok(Category::Integrated),
            other => Err(format!("unknown firm category `{other}`")),
        }
    }
}

/// Binds CSV column names to model roles.
///
/// `inputs` are ordered (capital, labor, fuel for the translog frontier);
/// `prices`, when non-empty, are aligned one-to-one with `inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableSchema {
    pub firm: String,
    pub year: String,
    pub output: String,
    pub inputs: Vec<String>,
    #[serde(default)]
    pub determinants: Vec<String>,
    #[serde(default)]
    pub prices: Vec<String>,
    #[serde(default)]
    pub category: Option<String>,
}

impl VariableSchema {
    pub fn check(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::Schema(
                "at least one input column is required".into(),
            ));
        }
        if !self.prices.is_empty() && self.prices.len() != self.inputs.len() {
            return Err(Error::Schema(format!(
                "{} price columns given for {} inputs",
                self.prices.len(),
                self.inputs.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub firm_id: String,
    pub year: i32,
    pub output: f64,
    /// Aligned with `VariableSchema::inputs`.
    pub inputs: Vec<f64>,
    /// Aligned with `VariableSchema::determinants`.
    pub determinants: Vec<f64>,
    /// Aligned with `VariableSchema::inputs` when price columns are bound.
    pub prices: Option<Vec<f64>>,
    pub category: Option<Category>,
}

impl Observation {
    pub fn ln_output(&self) -> f64 {
        self.output.ln()
    }

    pub fn ln_inputs(&self) -> Vec<f64> {
        self.inputs.iter().map(|x| x.ln()).collect()
    }
}

/// All observations of one firm, strictly increasing in year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmPanel {
    pub firm_id: String,
    pub category: Option<Category>,
    pub observations: Vec<Observation>,
}

impl FirmPanel {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn years(&self) -> Vec<i32> {
        self.observations.iter().map(|o| o.year).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    pub schema: VariableSchema,
    pub firms: Vec<FirmPanel>,
}

impl PanelDataset {
    /// Groups observations by firm (first-appearance order) and sorts each
    /// firm by year.
    pub fn from_observations(
        schema: VariableSchema,
        observations: Vec<Observation>,
    ) -> Result<Self> {
        schema.check()?;
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut firms: Vec<FirmPanel> = Vec::new();
        for (row, obs) in observations.into_iter().enumerate() {
            if obs.inputs.len() != schema.inputs.len()
                || obs.determinants.len() != schema.determinants.len()
            {
                return Err(Error::Misaligned(format!(
                    "observation {row} does not match the schema width"
                )));
            }
            let slot = *index.entry(obs.firm_id.clone()).or_insert_with(|| {
                firms.push(FirmPanel {
                    firm_id: obs.firm_id.clone(),
                    category: obs.category,
                    observations: Vec::new(),
                });
                firms.len() - 1
            });
            let firm = &mut firms[slot];
            if firm.category != obs.category {
                return Err(Error::Schema(format!(
                    "firm `{}` has inconsistent categories",
                    obs.firm_id
                )));
            }
            if firm.observations.iter().any(|o| o.year == obs.year) {
                return Err(Error::DuplicateObservation {
                    row: row + 1,
                    firm: obs.firm_id,
                    year: obs.year,
                });
            }
            firm.observations.push(obs);
        }
        for firm in &mut firms {
            firm.observations.sort_by_key(|o| o.year);
        }
        Ok(PanelDataset { schema, firms })
    }

    pub fn n_firms(&self) -> usize {
        self.firms.len()
    }

    pub fn n_observations(&self) -> usize {
        self.firms.iter().map(FirmPanel::len).sum()
    }

    pub fn first_year(&self) -> Option<i32> {
        self.firms
            .iter()
            .filter_map(|f| f.observations.first().map(|o| o.year))
            .min()
    }

    pub fn categories(&self) -> Vec<Category> {
        let mut cats: Vec<Category> = self.firms.iter().filter_map(|f| f.category).collect();
        cats.sort();
        cats.dedup();
        cats
    }

    /// Firms of a single category, schema preserved.
    pub fn subset(&self, category: Category) -> PanelDataset {
        PanelDataset {
            schema: self.schema.clone(),
            firms: self
                .firms
                .iter()
                .filter(|f| f.category == Some(category))
                .cloned()
                .collect(),
        }
    }

    /// Firms with at least two observations.
    pub fn estimation_set(&self) -> PanelDataset {
        PanelDataset {
            schema: self.schema.clone(),
            firms: self
                .firms
                .iter()
                .filter(|f| f.len() >= 2)
                .cloned()
                .collect(),
        }
    }
}

fn find_column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn {
            column: name.to_string(),
        })
}

fn field<'a>(
    record: &'a csv::StringRecord,
    idx: usize,
    row: usize,
    column: &str,
) -> Result<&'a str> {
    match record.get(idx).map(str::trim) {
        Some(v) if !v.is_empty() && !v.eq_ignore_ascii_case("na") => Ok(v),
        _ => Err(Error::MissingValue {
            row,
            column: column.to_string(),
        }),
    }
}

fn number(record: &csv::StringRecord, idx: usize, row: usize, column: &str) -> Result<f64> {
    let raw = field(record, idx, row, column)?;
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        }),
    }
}

fn positive(
    record: &csv::StringRecord,
    idx: usize,
    row: usize,
    column: &str,
    kind: &'static str,
) -> Result<f64> {
    let v = number(record, idx, row, column)?;
    if v <= 0.0 {
        return Err(Error::NonPositive {
            row,
            column: column.to_string(),
            kind,
            value: v,
        });
    }
    Ok(v)
}

/// Reads a panel from a UTF-8 CSV file with a header row.
pub fn load_csv(path: impl AsRef<Path>, schema: &VariableSchema) -> Result<PanelDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

/// Reads a panel from any CSV source. Row numbers in errors are 1-based
/// data rows (the header is row 0).
pub fn read_csv<R: std::io::Read>(reader: R, schema: &VariableSchema) -> Result<PanelDataset> {
    schema.check()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::Schema("file has no header row".into()));
    }

    let firm_col = find_column(&headers, &schema.firm)?;
    let year_col = find_column(&headers, &schema.year)?;
    let output_col = find_column(&headers, &schema.output)?;
    let input_cols = schema
        .inputs
        .iter()
        .map(|c| find_column(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let det_cols = schema
        .determinants
        .iter()
        .map(|c| find_column(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let price_cols = schema
        .prices
        .iter()
        .map(|c| find_column(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let category_col = schema
        .category
        .as_deref()
        .map(|c| find_column(&headers, c))
        .transpose()?;

    let mut observations = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let firm_id = field(&record, firm_col, row, &schema.firm)?.to_string();
        let year_raw = field(&record, year_col, row, &schema.year)?;
        let year = year_raw.parse::<i32>().map_err(|_| Error::Parse {
            row,
            column: schema.year.clone(),
            value: year_raw.to_string(),
        })?;
        let output = positive(&record, output_col, row, &schema.output, "output")?;
        let inputs = input_cols
            .iter()
            .zip(&schema.inputs)
            .map(|(&idx, name)| positive(&record, idx, row, name, "input"))
            .collect::<Result<Vec<_>>>()?;
        let determinants = det_cols
            .iter()
            .zip(&schema.determinants)
            .map(|(&idx, name)| number(&record, idx, row, name))
            .collect::<Result<Vec<_>>>()?;
        let prices = if price_cols.is_empty() {
            None
        } else {
            Some(
                price_cols
                    .iter()
                    .zip(&schema.prices)
                    .map(|(&idx, name)| {
                        let w = number(&record, idx, row, name)?;
                        if w < 0.0 {
                            return Err(Error::NonPositive {
                                row,
                                column: name.clone(),
                                kind: "price",
                                value: w,
                            });
                        }
                        Ok(w)
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        };
        let category = match (category_col, &schema.category) {
            (Some(idx), Some(name)) => {
                let raw = field(&record, idx, row, name)?;
                Some(raw.parse::<Category>().map_err(|_| Error::Parse {
                    row,
                    column: name.clone(),
                    value: raw.to_string(),
                })?)
            }
            _ => None,
        };
        observations.push(Observation {
            firm_id,
            year,
            output,
            inputs,
            determinants,
            prices,
            category,
        });
    }
    if observations.is_empty() {
        return Err(Error::EmptyEstimationSet(
            "file contains no data rows".into(),
        ));
    }
    PanelDataset::from_observations(schema.clone(), observations)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub firms: usize,
    pub firm_years: usize,
}

/// Firm and firm-year tallies, overall and by category and year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub firms: usize,
    pub firm_years: usize,
    /// Firms with a single observation, dropped from estimation.
    pub excluded: Vec<String>,
    pub estimation_firms: usize,
    pub estimation_firm_years: usize,
    /// Keyed by category name ("All" when no category column is bound).
    pub by_category: BTreeMap<String, Tally>,
    /// Firm counts per (category, year).
    pub by_category_year: BTreeMap<String, BTreeMap<i32, usize>>,
}

impl ValidationReport {
    pub fn years(&self) -> Vec<i32> {
        let mut years: Vec<i32> = self
            .by_category_year
            .values()
            .flat_map(|m| m.keys().copied())
            .collect();
        years.sort_unstable();
        years.dedup();
        years
    }

    /// Plain-text grid of firm counts by year (rows) and category (columns).
    pub fn render_text(&self) -> String {
        use std::fmt::Write;
        let cats: Vec<&String> = self.by_category.keys().collect();
        let mut out = String::new();
        let _ = write!(out, "{:<10}", "Year");
        for c in &cats {
            let _ = write!(out, "{:>12}", c);
        }
        let _ = writeln!(out, "{:>12}", "Total");
        for year in self.years() {
            let _ = write!(out, "{:<10}", year);
            let mut total = 0;
            for c in &cats {
                let n = self.by_category_year[*c].get(&year).copied().unwrap_or(0);
                total += n;
                let _ = write!(out, "{:>12}", n);
            }
            let _ = writeln!(out, "{:>12}", total);
        }
        let _ = write!(out, "{:<10}", "Firms");
        for c in &cats {
            let _ = write!(out, "{:>12}", self.by_category[*c].firms);
        }
        let _ = writeln!(out, "{:>12}", self.firms);
        let _ = write!(out, "{:<10}", "Firm-Years");
        for c in &cats {
            let _ = write!(out, "{:>12}", self.by_category[*c].firm_years);
        }
        let _ = writeln!(out, "{:>12}", self.firm_years);
        if !self.excluded.is_empty() {
            let _ = writeln!(
                out,
                "excluded (single observation): {}",
                self.excluded.join(", ")
            );
        }
        out
    }
}

pub fn validate_panel(data: &PanelDataset) -> Result<ValidationReport> {
    let mut by_category: BTreeMap<String, Tally> = BTreeMap::new();
    let mut by_category_year: BTreeMap<String, BTreeMap<i32, usize>> = BTreeMap::new();
    let mut excluded = Vec::new();
    let mut estimation_firms = 0;
    let mut estimation_firm_years = 0;

    for firm in &data.firms {
        let key = firm
            .category
            .map(|c| c.as_str().to_string())
            .unwrap_or_else(|| "All".to_string());
        let tally = by_category.entry(key.clone()).or_default();
        tally.firms += 1;
        tally.firm_years += firm.len();
        let grid = by_category_year.entry(key).or_default();
        for obs in &firm.observations {
            *grid.entry(obs.year).or_default() += 1;
        }
        if firm.len() < 2 {
            excluded.push(firm.firm_id.clone());
        } else {
            estimation_firms += 1;
            estimation_firm_years += firm.len();
        }
    }

    if estimation_firms == 0 {
        return Err(Error::EmptyEstimationSet(format!(
            "all {} firms have fewer than two observations",
            data.n_firms()
        )));
    }

    Ok(ValidationReport {
        firms: data.n_firms(),
        firm_years: data.n_observations(),
        excluded,
        estimation_firms,
        estimation_firm_years,
        by_category,
        by_category_year,
    })
}

/// Subtracts the mean, returning the demeaned values and the mean.
pub fn demean(values: &[f64]) -> (Vec<f64>, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| v - mean).collect(), mean)
}

/// One firm after the within transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct FirmBlock {
    pub firm_id: String,
    pub category: Option<Category>,
    pub years: Vec<i32>,
    /// Raw log output.
    pub y: DVector<f64>,
    pub y_tilde: DVector<f64>,
    pub y_mean: f64,
    /// Raw regressor rows (T × p).
    pub x: DMatrix<f64>,
    pub x_tilde: DMatrix<f64>,
    pub x_mean: DVector<f64>,
    /// Raw determinant rows (T × K); scaling values are recomputed from
    /// these for every δ.
    pub z: DMatrix<f64>,
}

impl FirmBlock {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Demeaned panel ready for likelihood evaluation. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedPanel {
    pub firms: Vec<FirmBlock>,
    pub regressor_names: Vec<String>,
    pub determinant_names: Vec<String>,
}

impl TransformedPanel {
    pub fn n_regressors(&self) -> usize {
        self.regressor_names.len()
    }

    pub fn n_determinants(&self) -> usize {
        self.determinant_names.len()
    }

    pub fn n_observations(&self) -> usize {
        self.firms.iter().map(FirmBlock::len).sum()
    }
}

/// Demeans log output, regressor rows and determinant-driven data per firm.
///
/// `design` holds one regressor row per observation in dataset order
/// (firm-major, year-sorted); `determinants` likewise, with columns named
/// by `determinant_names`. Single-observation firms are skipped.
pub fn within_transform(
    data: &PanelDataset,
    design: &[Vec<f64>],
    regressor_names: &[String],
    determinants: &[Vec<f64>],
    determinant_names: &[String],
) -> Result<TransformedPanel> {
    let n = data.n_observations();
    if design.len() != n || determinants.len() != n {
        return Err(Error::Misaligned(format!(
            "{n} observations but {} design rows and {} determinant rows",
            design.len(),
            determinants.len()
        )));
    }
    let p = regressor_names.len();
    let k = determinant_names.len();
    let mut firms = Vec::with_capacity(data.n_firms());
    let mut offset = 0;
    for firm in &data.firms {
        let t_len = firm.len();
        let rows = &design[offset..offset + t_len];
        let zrows = &determinants[offset..offset + t_len];
        offset += t_len;
        if t_len < 2 {
            continue;
        }
        if rows.iter().any(|r| r.len() != p) || zrows.iter().any(|r| r.len() != k) {
            return Err(Error::Misaligned(format!(
                "row width mismatch for firm `{}`",
                firm.firm_id
            )));
        }
        let y: Vec<f64> = firm
            .observations
            .iter()
            .map(Observation::ln_output)
            .collect();
        let (y_tilde, y_mean) = demean(&y);
        let x = DMatrix::from_fn(t_len, p, |t, j| rows[t][j]);
        let x_mean = DVector::from_iterator(p, x.column_iter().map(|c| c.mean()));
        let x_tilde = DMatrix::from_fn(t_len, p, |t, j| x[(t, j)] - x_mean[j]);
        let z = DMatrix::from_fn(t_len, k, |t, j| zrows[t][j]);
        firms.push(FirmBlock {
            firm_id: firm.firm_id.clone(),
            category: firm.category,
            years: firm.years(),
            y: DVector::from_vec(y),
            y_tilde: DVector::from_vec(y_tilde),
            y_mean,
            x,
            x_tilde,
            x_mean,
            z,
        });
    }
    if firms.is_empty() {
        return Err(Error::EmptyEstimationSet(
            "no firm has two or more observations".into(),
        ));
    }
    Ok(TransformedPanel {
        firms,
        regressor_names: regressor_names.to_vec(),
        determinant_names: determinant_names.to_vec(),
    })
}

/// True when `values` sums to zero within `1e-10 · T · max|value|`.
pub fn is_demeaned(values: &[f64]) -> bool {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sum: f64 = values.iter().sum();
    sum.abs() <= 1e-10 * values.len() as f64 * scale.max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema() -> VariableSchema {
        VariableSchema {
            firm: "firm".into(),
            year: "year".into(),
            output: "output".into(),
            inputs: vec!["K".into(), "L".into(), "F".into()],
            determinants: vec!["time".into()],
            prices: vec![],
            category: None,
        }
    }

    #[test]
    fn three_rows_two_firms() {
        let csv = "firm,year,output,K,L,F,time\n\
                   A,2001,2.0,1,1,1,1\n\
                   A,2000,1.5,1,1,1,0\n\
                   B,2000,3.0,2,2,2,0\n";
        let data = read_csv(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(data.n_firms(), 2);
        assert_eq!(data.firms[0].firm_id, "A");
        assert_eq!(data.firms[0].years(), vec![2000, 2001]);
        assert_eq!(data.firms[1].len(), 1);
        let report = validate_panel(&data).unwrap();
        assert_eq!(report.excluded, vec!["B".to_string()]);
        assert_eq!(report.estimation_firms, 1);
    }

    #[test]
    fn missing_output_column() {
        let csv = "firm,year,K,L,F,time\nA,2000,1,1,1,0\n";
        let err = read_csv(csv.as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn { ref column } if column == "output"));
        assert!(err.to_string().contains("output"));
    }

    #[test]
    fn zero_input_is_log_domain_error() {
        let csv = "firm,year,output,K,L,F,time\nA,2000,1,0,1,1,0\n";
        let err = read_csv(csv.as_bytes(), &schema()).unwrap_err();
        assert!(
            err.to_string().contains("log of non-positive input"),
            "{err}"
        );
        assert!(matches!(err, Error::NonPositive { row: 1, .. }));
    }

    #[test]
    fn duplicate_firm_year_rejected() {
        let csv = "firm,year,output,K,L,F,time\nA,2000,1,1,1,1,0\nA,2000,2,1,1,1,0\n";
        let err = read_csv(csv.as_bytes(), &schema()).unwrap_err();
        assert!(matches!(
            err,
            Error::DuplicateObservation {
                row: 2,
                year: 2000,
                ..
            }
        ));
    }

    #[test]
    fn missing_value_names_row() {
        let csv = "firm,year,output,K,L,F,time\nA,2000,1,1,1,1,0\nA,2001,,1,1,1,1\n";
        let err = read_csv(csv.as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, Error::MissingValue { row: 2, .. }));
    }

    #[test]
    fn all_single_observation_firms_is_error() {
        let csv = "firm,year,output,K,L,F,time\nA,2000,1,1,1,1,0\nB,2000,1,1,1,1,0\n";
        let data = read_csv(csv.as_bytes(), &schema()).unwrap();
        assert!(matches!(
            validate_panel(&data),
            Err(Error::EmptyEstimationSet(_))
        ));
    }

    #[test]
    fn no_exclusions_when_all_long() {
        let csv = "firm,year,output,K,L,F,time\nA,2000,1,1,1,1,0\nA,2002,1,1,1,1,2\n";
        let report = validate_panel(&read_csv(csv.as_bytes(), &schema()).unwrap()).unwrap();
        assert!(report.excluded.is_empty());
        assert_eq!(report.firm_years, 2);
    }

    #[test]
    fn demean_examples() {
        assert_eq!(demean(&[1.0, 2.0, 3.0]).0, vec![-1.0, 0.0, 1.0]);
        assert_eq!(demean(&[4.2, 4.2, 4.2]).0, vec![0.0, 0.0, 0.0]);
    }

    fn dataset(ys: &[Vec<f64>]) -> PanelDataset {
        let mut obs = Vec::new();
        for (i, firm) in ys.iter().enumerate() {
            for (t, y) in firm.iter().enumerate() {
                obs.push(Observation {
                    firm_id: format!("f{i}"),
                    year: 2000 + t as i32,
                    output: y.exp(),
                    inputs: vec![1.0 + t as f64, 2.0, 3.0],
                    determinants: vec![t as f64],
                    prices: None,
                    category: None,
                });
            }
        }
        PanelDataset::from_observations(schema(), obs).unwrap()
    }

    fn transform(data: &PanelDataset) -> TransformedPanel {
        let design: Vec<Vec<f64>> = data
            .firms
            .iter()
            .flat_map(|f| f.observations.iter().map(|o| vec![o.inputs[0].ln(), 5.0]))
            .collect();
        let z: Vec<Vec<f64>> = data
            .firms
            .iter()
            .flat_map(|f| f.observations.iter().map(|o| o.determinants.clone()))
            .collect();
        within_transform(
            data,
            &design,
            &["lnK".into(), "c".into()],
            &z,
            &["time".into()],
        )
        .unwrap()
    }

    #[test]
    fn constant_column_demeans_to_zero() {
        let tp = transform(&dataset(&[vec![1.0, 2.0, 3.0]]));
        let b = &tp.firms[0];
        assert!(b.x_tilde.column(1).iter().all(|v| *v == 0.0));
        assert_eq!(b.y_tilde.as_slice(), &[-1.0, 0.0, 1.0]);
        assert_eq!(b.x_mean[1], 5.0);
    }

    #[test]
    fn misaligned_design_rejected() {
        let data = dataset(&[vec![1.0, 2.0]]);
        let err = within_transform(
            &data,
            &[vec![0.0]],
            &["a".into()],
            &[vec![0.0], vec![1.0]],
            &["time".into()],
        );
        assert!(matches!(err, Err(Error::Misaligned(_))));
    }

    proptest! {
        #[test]
        fn demeaned_sums_vanish_and_idempotent(values in prop::collection::vec(-1e3f64..1e3, 2..12)) {
            let (once, _) = demean(&values);
            prop_assert!(is_demeaned(&once));
            let (twice, m) = demean(&once);
            prop_assert!(m.abs() <= 1e-10 * values.len() as f64 * 1e3);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn per_firm_shift_is_eliminated(
            ys in prop::collection::vec(prop::collection::vec(-3f64..3.0, 2..6), 1..5),
            shifts in prop::collection::vec(-5f64..5.0, 5),
        ) {
            let base = transform(&dataset(&ys));
            let shifted: Vec<Vec<f64>> = ys
                .iter()
                .zip(&shifts)
                .map(|(f, a)| f.iter().map(|y| y + a).collect())
                .collect();
            let moved = transform(&dataset(&shifted));
            for (b, m) in base.firms.iter().zip(&moved.firms) {
                for (u, v) in b.y_tilde.iter().zip(m.y_tilde.iter()) {
                    prop_assert!((u - v).abs() < 1e-12);
                }
            }
        }
    }
}
