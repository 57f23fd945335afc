//! Run configuration: a TOML file overlaid by command-line flags.
//!
//! ```toml
//! data = "panel.csv"
//! out = "out"
//! base_year = 2000
//! frontier = "production"      # production | cost
//! technical_change = "eq12"    # eq12 | full
//! dte = "corrected"            # corrected | paper
//! fixed_effects = "corrected"  # corrected | paper
//! pooled = false
//! formats = ["csv", "json", "md"]
//! boundary = 2004
//! weighting = "unweighted"     # unweighted | output
//!
//! [schema]
//! firm = "firm"
//! year = "year"
//! output = "y"
//! inputs = ["K", "L", "F"]
//! determinants = ["trend", "owner"]
//! prices = ["wK", "wL", "wF"]
//! category = "category"
//!
//! [estimation]
//! max_iterations = 500
//! gradient_tolerance = 1e-6
//! multistart = 3
//! seed = 1
//!
//! [simulation]
//! replications = 200
//!
//! [simulation.dgp]
//! firms = 100
//! periods = 10
//! ```

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use frontier_core::estimator::EstimationConfig;
use frontier_core::likelihood::FrontierSign;
use frontier_core::panel::VariableSchema;
use frontier_core::postestimation::FixedEffectFormula;
use frontier_core::simulate::DgpSpec;
use frontier_core::tfp::{DteVariant, Weighting};
use frontier_core::translog::TechnicalChange;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FrontierArg {
    #[default]
    Production,
    Cost,
}

impl From<FrontierArg> for FrontierSign {
    fn from(a: FrontierArg) -> Self {
        match a {
            FrontierArg::Production => FrontierSign::Production,
            FrontierArg::Cost => FrontierSign::Cost,
        }
    }
}

/// Which formula variant to use where two are offered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum VariantArg {
    Paper,
    #[default]
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TechnicalChangeArg {
    #[default]
    Eq12,
    Full,
}

impl From<TechnicalChangeArg> for TechnicalChange {
    fn from(a: TechnicalChangeArg) -> Self {
        match a {
            TechnicalChangeArg::Eq12 => TechnicalChange::TimeOnly,
            TechnicalChangeArg::Full => TechnicalChange::FullDerivative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingArg {
    #[default]
    Unweighted,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Md,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub replications: usize,
    pub dgp: DgpSpec,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            replications: 200,
            dgp: DgpSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    /// Defaults to the first year in the data.
    pub base_year: Option<i32>,
    pub frontier: FrontierArg,
    pub technical_change: TechnicalChangeArg,
    pub dte: VariantArg,
    pub fixed_effects: VariantArg,
    pub pooled: bool,
    pub formats: Vec<Format>,
    pub boundary: i32,
    pub weighting: WeightingArg,
    pub schema: VariableSchema,
    pub estimation: EstimationConfig,
    pub simulation: SimulationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            out: PathBuf::from("out"),
            base_year: None,
            frontier: FrontierArg::Production,
            technical_change: TechnicalChangeArg::Eq12,
            dte: VariantArg::Corrected,
            fixed_effects: VariantArg::Corrected,
            pooled: false,
            formats: vec![Format::Csv, Format::Json, Format::Md],
            boundary: 2004,
            weighting: WeightingArg::Unweighted,
            schema: DgpSpec::default().schema(),
            estimation: EstimationConfig::default(),
            simulation: SimulationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn wants(&self, format: Format) -> bool {
        self.formats.contains(&format)
    }

    pub fn sign(&self) -> FrontierSign {
        self.frontier.into()
    }

    pub fn fixed_effect_formula(&self) -> FixedEffectFormula {
        match self.fixed_effects {
            VariantArg::Paper => FixedEffectFormula::Literal,
            VariantArg::Corrected => FixedEffectFormula::Corrected,
        }
    }

    pub fn dte_variant(&self) -> DteVariant {
        match self.dte {
            VariantArg::Paper => DteVariant::Literal,
            VariantArg::Corrected => DteVariant::Corrected,
        }
    }

    pub fn weighting(&self) -> Weighting {
        match self.weighting {
            WeightingArg::Unweighted => Weighting::Unweighted,
            WeightingArg::Output => Weighting::Output,
        }
    }

    pub fn data_path(&self) -> CliResult<&Path> {
        self.data.as_deref().ok_or_else(|| {
            CliError::Usage("no data file given (use --data or `data` in the config)".into())
        })
    }

    pub fn check(&self) -> CliResult<()> {
        self.schema
            .check()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        self.estimation
            .check()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if self.formats.is_empty() {
            return Err(CliError::Usage(
                "`formats` must name at least one of csv, json, md".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_field_is_named() {
        let err = RunConfig::parse("frontier = \"production\"\nfrontiers = 1\n").unwrap_err();
        assert!(err.contains("frontiers"), "{err}");
    }

    #[test]
    fn bad_variant_is_named() {
        let err = RunConfig::parse("technical_change = \"eq13\"\n").unwrap_err();
        assert!(
            err.contains("technical_change") || err.contains("eq13"),
            "{err}"
        );
    }

    #[test]
    fn nested_sections() {
        let cfg = RunConfig::parse(
            r#"
            dte = "paper"
            [schema]
            firm = "id"
            year = "yr"
            output = "q"
            inputs = ["k", "l", "f"]
            [estimation]
            seed = 9
            [simulation]
            replications = 4
            [simulation.dgp]
            firms = 20
            "#,
        )
        .unwrap();
        assert_eq!(cfg.dte_variant(), DteVariant::Literal);
        assert_eq!(cfg.schema.firm, "id");
        assert_eq!(cfg.estimation.seed, 9);
        assert_eq!(cfg.estimation.multistart, 3);
        assert_eq!(cfg.simulation.replications, 4);
        assert_eq!(cfg.simulation.dgp.firms, 20);
        assert_eq!(cfg.simulation.dgp.periods, 10);
    }
}
