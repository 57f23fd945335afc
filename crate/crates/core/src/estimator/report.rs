//! Coefficient tables laid out as frontier, exogenous-determinant and
//! inefficiency blocks followed by the log-likelihood, one column per
//! model. Standard errors appear in parentheses beneath each estimate and
//! significance stars use normal-approximation p-values:
//! `†` p<0.1, `*` p<0.05, `**` p<0.01, `***` p<0.001.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::normal::two_sided_p;

use super::EstimationResult;

pub const STAR_LEGEND: &str =
    "Significance denoted by †: p<0.1, *: p<0.05, **: p<0.01, ***: p<0.001";
pub const STDERR_NOTE: &str = "Standard errors (in parenthesis) computed using delta method.";

/// Frontier rows in display order: `(parameter name, variable label, symbol)`.
const FRONTIER_ROWS: [(&str, &str, &str); 14] = [
    ("lnK", "ln(K)", "β_K"),
    ("lnL", "ln(L)", "β_L"),
    ("lnF", "ln(F)", "β_F"),
    ("half_lnK2", "½ln(K)ln(K)", "β_KK"),
    ("half_lnL2", "½ln(L)ln(L)", "β_LL"),
    ("half_lnF2", "½ln(F)ln(F)", "β_FF"),
    ("lnK_lnL", "ln(K)ln(L)", "β_KL"),
    ("lnK_lnF", "ln(K)ln(F)", "β_KF"),
    ("lnL_lnF", "ln(L)ln(F)", "β_LF"),
    ("t", "Time", "β_t"),
    ("half_t2", "½Time²", "β_tt"),
    ("t_lnK", "ln(K)Time", "β_Kt"),
    ("t_lnL", "ln(L)Time", "β_Lt"),
    ("t_lnF", "ln(F)Time", "β_Ft"),
];

const INEFFICIENCY_ROWS: [(&str, &str); 2] = [("ln_sigma_u", "ln(σ_u)"), ("ln_sigma_v", "ln(σ_v)")];

pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else if p < 0.1 {
        "†"
    } else {
        ""
    }
}

/// One model column of a coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportColumn {
    pub title: String,
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
    pub loglik: f64,
}

impl ReportColumn {
    pub fn from_result(title: impl Into<String>, result: &EstimationResult) -> Self {
        ReportColumn {
            title: title.into(),
            names: result.parameter_names.clone(),
            estimates: result.params.values.clone(),
            stderr: result.stderr.clone(),
            loglik: result.loglik,
        }
    }

    /// `(estimate with stars, "(stderr)")`, or `--` for absent parameters.
    fn cells(&self, name: &str) -> (String, String) {
        let Some(j) = self.names.iter().position(|n| n == name) else {
            return ("--".into(), "--".into());
        };
        let est = self.estimates[j];
        match self.stderr.as_ref().map(|s| s[j]) {
            Some(se) if se > 0.0 && se.is_finite() => {
                let p = two_sided_p(est / se);
                (format!("{est:.3}{}", stars(p)), format!("({se:.3})"))
            }
            _ => (format!("{est:.3}"), "(n/a)".into()),
        }
    }
}

#[derive(Debug, Clone)]
enum Row {
    Section(&'static str),
    Param {
        name: String,
        label: String,
        symbol: String,
    },
    LogLik,
}

fn layout(columns: &[ReportColumn]) -> Vec<Row> {
    let mut rows: Vec<Row> = FRONTIER_ROWS
        .iter()
        .map(|(n, l, s)| Row::Param {
            name: n.to_string(),
            label: l.to_string(),
            symbol: s.to_string(),
        })
        .collect();
    let mut determinants: Vec<String> = Vec::new();
    for col in columns {
        for name in &col.names {
            if let Some(d) = name.strip_prefix("delta_") {
                if !determinants.iter().any(|x| x == d) {
                    determinants.push(d.to_string());
                }
            }
        }
    }
    rows.push(Row::Section("Exogenous explanatory variables"));
    for d in determinants {
        rows.push(Row::Param {
            name: format!("delta_{d}"),
            label: d.clone(),
            symbol: format!("δ_{d}"),
        });
    }
    rows.push(Row::Section("Inefficiency"));
    for (n, s) in INEFFICIENCY_ROWS {
        rows.push(Row::Param {
            name: n.to_string(),
            label: String::new(),
            symbol: s.to_string(),
        });
    }
    rows.push(Row::Section(""));
    rows.push(Row::LogLik);
    rows
}

const LABEL_W: usize = 22;
const SYMBOL_W: usize = 12;
const CELL_W: usize = 14;

/// Aligned plain-text table.
pub fn render_text(columns: &[ReportColumn]) -> String {
    let width = LABEL_W + SYMBOL_W + CELL_W * columns.len();
    let rule = "-".repeat(width);
    let mut out = String::new();
    let _ = write!(out, "{:<LABEL_W$}{:<SYMBOL_W$}", "Variable", "Par.");
    for c in columns {
        let _ = write!(out, "{:>CELL_W$}", c.title);
    }
    out.push('\n');
    let _ = writeln!(out, "{rule}");
    for row in layout(columns) {
        match row {
            Row::Section(title) => {
                let _ = writeln!(out, "{rule}");
                if !title.is_empty() {
                    let _ = writeln!(out, "{title}");
                    let _ = writeln!(out, "{rule}");
                }
            }
            Row::Param {
                name,
                label,
                symbol,
            } => {
                let _ = write!(out, "{label:<LABEL_W$}{symbol:<SYMBOL_W$}");
                let cells: Vec<(String, String)> = columns.iter().map(|c| c.cells(&name)).collect();
                for (est, _) in &cells {
                    let _ = write!(out, "{:>CELL_W$}", pad_stars(est));
                }
                out.push('\n');
                let _ = write!(out, "{:<LABEL_W$}{:<SYMBOL_W$}", "", "");
                for (_, se) in &cells {
                    let _ = write!(out, "{:>CELL_W$}", pad_stars(se));
                }
                out.push('\n');
            }
            Row::LogLik => {
                let _ = write!(out, "{:<LABEL_W$}{:<SYMBOL_W$}", "Log Likelihood", "");
                for c in columns {
                    let _ = write!(out, "{:>CELL_W$}", pad_stars(&format!("{:.3}", c.loglik)));
                }
                out.push('\n');
            }
        }
    }
    let _ = writeln!(out, "{rule}");
    let _ = writeln!(out, "{STDERR_NOTE}");
    let _ = writeln!(out, "{STAR_LEGEND}");
    out.lines().map(|l| format!("{}\n", l.trim_end())).collect()
}

/// Pads a cell so numbers align whether or not they carry stars.
fn pad_stars(cell: &str) -> String {
    let trailing = cell
        .chars()
        .rev()
        .take_while(|c| *c == '*' || *c == '†')
        .count();
    format!("{cell}{}", " ".repeat(3 - trailing.min(3)))
}

/// Markdown table with the same rows as [`render_text`].
pub fn render_markdown(columns: &[ReportColumn]) -> String {
    let mut out = String::new();
    out.push_str("| Variable | Par. |");
    for c in columns {
        let _ = write!(out, " {} |", c.title);
    }
    out.push('\n');
    out.push_str("|---|---|");
    for _ in columns {
        out.push_str("---:|");
    }
    out.push('\n');
    for row in layout(columns) {
        match row {
            Row::Section(title) => {
                if !title.is_empty() {
                    let _ = write!(out, "| **{title}** | |");
                    for _ in columns {
                        out.push_str(" |");
                    }
                    out.push('\n');
                }
            }
            Row::Param {
                name,
                label,
                symbol,
            } => {
                let cells: Vec<(String, String)> = columns.iter().map(|c| c.cells(&name)).collect();
                let _ = write!(out, "| {label} | {symbol} |");
                for (est, _) in &cells {
                    let _ = write!(out, " {est} |");
                }
                out.push('\n');
                out.push_str("| | |");
                for (_, se) in &cells {
                    let _ = write!(out, " {se} |");
                }
                out.push('\n');
            }
            Row::LogLik => {
                out.push_str("| Log Likelihood | |");
                for c in columns {
                    let _ = write!(out, " {:.3} |", c.loglik);
                }
                out.push('\n');
            }
        }
    }
    out.push('\n');
    let _ = writeln!(out, "{STDERR_NOTE}");
    let _ = writeln!(out, "{STAR_LEGEND}");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(0.0005), "***");
        assert_eq!(stars(0.005), "**");
        assert_eq!(stars(0.03), "*");
        assert_eq!(stars(0.07), "†");
        assert_eq!(stars(0.2), "");
        // boundaries are strict
        assert_eq!(stars(0.1), "");
        assert_eq!(stars(0.05), "†");
    }

    #[test]
    fn absent_parameter_renders_dashes() {
        let col = ReportColumn {
            title: "Gas".into(),
            names: vec!["lnK".into()],
            estimates: vec![0.205],
            stderr: Some(vec![1.052]),
            loglik: 54.149,
        };
        assert_eq!(col.cells("delta_cg"), ("--".to_string(), "--".to_string()));
        assert_eq!(
            col.cells("lnK"),
            ("0.205".to_string(), "(1.052)".to_string())
        );
    }
}
