//! Three-input translog frontier: regressor rows, output elasticities,
//! returns to scale and technical change.
//!
//! Column order of a regressor row (no intercept, the firm effect absorbs it):
//!
//! | idx | term        | idx | term        |
//! |-----|-------------|-----|-------------|
//! | 0   | ln K        | 7   | ln K·ln L   |
//! | 1   | ln L        | 8   | ln K·ln F   |
//! | 2   | ln F        | 9   | ln L·ln F   |
//! | 3   | t           | 10  | ½ t²        |
//! | 4   | ½ (ln K)²   | 11  | t·ln K      |
//! | 5   | ½ (ln L)²   | 12  | t·ln L      |
//! | 6   | ½ (ln F)²   | 13  | t·ln F      |
//!
//! `t` is `year - base_year`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

pub const N_INPUTS: usize = 3;
pub const N_TERMS: usize = 14;

pub const TERM_NAMES: [&str; N_TERMS] = [
    "lnK",
    "lnL",
    "lnF",
    "t",
    "half_lnK2",
    "half_lnL2",
    "half_lnF2",
    "lnK_lnL",
    "lnK_lnF",
    "lnL_lnF",
    "half_t2",
    "t_lnK",
    "t_lnL",
    "t_lnF",
];

const FIRST_ORDER: [usize; N_INPUTS] = [0, 1, 2];
const TIME: usize = 3;
const OWN_SQUARE: [usize; N_INPUTS] = [4, 5, 6];
const TIME_SQUARE: usize = 10;
const TIME_INTERACTION: [usize; N_INPUTS] = [11, 12, 13];

/// Column index of the cross term `ln x_a · ln x_b`, `a != b`.
fn cross(a: usize, b: usize) -> usize {
    match (a.min(b), a.max(b)) {
        (0, 1) => 7,
        (0, 2) => 8,
        (1, 2) => 9,
        _ => unreachable!("cross term requires two distinct inputs"),
    }
}

/// How `ΔT` is evaluated from the fitted frontier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TechnicalChange {
    /// `β_t + β_tt·t`.
    #[default]
    TimeOnly,
    /// `∂ ln f / ∂t`, adding the `β_nt·ln x_n` terms.
    FullDerivative,
}

/// Translog coefficients aligned with the regressor column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierCoefficients(pub [f64; N_TERMS]);

impl FrontierCoefficients {
    pub fn from_slice(beta: &[f64]) -> Result<Self> {
        let arr: [f64; N_TERMS] = beta.try_into().map_err(|_| {
            Error::InvalidArgument(format!(
                "expected {N_TERMS} translog coefficients, got {}",
                beta.len()
            ))
        })?;
        if arr.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidArgument(
                "non-finite translog coefficient".into(),
            ));
        }
        Ok(FrontierCoefficients(arr))
    }

    /// First-order terms only (Cobb-Douglas restriction).
    pub fn cobb_douglas(beta_inputs: [f64; N_INPUTS], beta_t: f64) -> Self {
        let mut b = [0.0; N_TERMS];
        b[..N_INPUTS].copy_from_slice(&beta_inputs);
        b[TIME] = beta_t;
        FrontierCoefficients(b)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Regressor row from log inputs and the time index.
pub fn design_row_from_logs(ln_x: &[f64; N_INPUTS], t: f64) -> [f64; N_TERMS] {
    let [k, l, f] = *ln_x;
    [
        k,
        l,
        f,
        t,
        0.5 * k * k,
        0.5 * l * l,
        0.5 * f * f,
        k * l,
        k * f,
        l * f,
        0.5 * t * t,
        t * k,
        t * l,
        t * f,
    ]
}

fn logs(inputs: &[f64]) -> Result<[f64; N_INPUTS]> {
    if inputs.len() != N_INPUTS {
        return Err(Error::InvalidArgument(format!(
            "translog frontier needs {N_INPUTS} inputs, got {}",
            inputs.len()
        )));
    }
    let mut out = [0.0; N_INPUTS];
    for (o, &x) in out.iter_mut().zip(inputs) {
        if !(x > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "log of non-positive input ({x})"
            )));
        }
        *o = x.ln();
    }
    Ok(out)
}

/// Regressor row for input levels `(K, L, F)` at time index `t`.
pub fn build_design(inputs: &[f64], t: f64) -> Result<[f64; N_TERMS]> {
    Ok(design_row_from_logs(&logs(inputs)?, t))
}

/// Deterministic log frontier `ln f(x, t)` (without the firm effect).
pub fn log_frontier(beta: &FrontierCoefficients, ln_x: &[f64; N_INPUTS], t: f64) -> f64 {
    design_row_from_logs(ln_x, t)
        .iter()
        .zip(beta.0.iter())
        .map(|(r, b)| r * b)
        .sum()
}

/// Output elasticities `γ_n = ∂ ln f / ∂ ln x_n` at log inputs `ln_x`.
pub fn elasticities_at(
    beta: &FrontierCoefficients,
    ln_x: &[f64; N_INPUTS],
    t: f64,
) -> [f64; N_INPUTS] {
    let b = &beta.0;
    let mut gamma = [0.0; N_INPUTS];
    for n in 0..N_INPUTS {
        let mut g = b[FIRST_ORDER[n]] + b[OWN_SQUARE[n]] * ln_x[n] + b[TIME_INTERACTION[n]] * t;
        for k in (0..N_INPUTS).filter(|&k| k != n) {
            g += b[cross(n, k)] * ln_x[k];
        }
        gamma[n] = g;
    }
    gamma
}

pub fn elasticities(
    beta: &FrontierCoefficients,
    inputs: &[f64],
    t: f64,
) -> Result<[f64; N_INPUTS]> {
    Ok(elasticities_at(beta, &logs(inputs)?, t))
}

pub fn returns_to_scale(gamma: &[f64]) -> f64 {
    gamma.iter().sum()
}

/// Frontier shift `ΔT` at time index `t` (and log inputs, for the full
/// derivative).
pub fn technical_change(
    beta: &FrontierCoefficients,
    ln_x: &[f64; N_INPUTS],
    t: f64,
    variant: TechnicalChange,
) -> f64 {
    let b = &beta.0;
    let mut dt = b[TIME] + b[TIME_SQUARE] * t;
    if variant == TechnicalChange::FullDerivative {
        dt += TIME_INTERACTION
            .iter()
            .zip(ln_x)
            .map(|(&j, lx)| b[j] * lx)
            .sum::<f64>();
    }
    dt
}

/// Regressor rows for every observation in dataset order, with
/// `t = year - base_year`.
pub fn design_matrix(data: &PanelDataset, base_year: i32) -> Result<Vec<Vec<f64>>> {
    data.firms
        .iter()
        .flat_map(|f| f.observations.iter())
        .map(|o| build_design(&o.inputs, f64::from(o.year - base_year)).map(|r| r.to_vec()))
        .collect()
}

pub fn term_names() -> Vec<String> {
    TERM_NAMES.iter().map(|s| s.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::E;

    #[test]
    fn unit_inputs_at_origin_give_zero_row() {
        assert_eq!(build_design(&[1.0, 1.0, 1.0], 0.0).unwrap(), [0.0; N_TERMS]);
    }

    #[test]
    fn single_active_log() {
        let row = build_design(&[E, 1.0, 1.0], 0.0).unwrap();
        let mut expected = [0.0; N_TERMS];
        expected[0] = 1.0;
        expected[4] = 0.5;
        for (a, b) in row.iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn two_logs_and_time() {
        let row = build_design(&[E, E, 1.0], 2.0).unwrap();
        assert_relative_eq!(row[7], 1.0, epsilon = 1e-15);
        assert_relative_eq!(row[11], 2.0, epsilon = 1e-15);
        assert_relative_eq!(row[12], 2.0, epsilon = 1e-15);
        assert_relative_eq!(row[10], 2.0, epsilon = 1e-15);
        assert_relative_eq!(row[3], 2.0, epsilon = 1e-15);
        assert_eq!(row[8], 0.0);
        assert_eq!(row[13], 0.0);
    }

    #[test]
    fn non_positive_input_rejected() {
        assert!(build_design(&[1.0, 0.0, 1.0], 0.0).is_err());
        assert!(build_design(&[1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn cobb_douglas_elasticities_are_constant() {
        let beta = FrontierCoefficients::cobb_douglas([0.5, 0.4, 0.25], 0.01);
        for inputs in [[1.0, 2.0, 3.0], [10.0, 0.1, 7.0]] {
            let g = elasticities(&beta, &inputs, 3.0).unwrap();
            assert_eq!(g, [0.5, 0.4, 0.25]);
            assert_relative_eq!(returns_to_scale(&g), 1.15, epsilon = 1e-15);
        }
    }

    #[test]
    fn own_square_elasticity() {
        let mut b = [0.0; N_TERMS];
        b[0] = 1.0;
        b[4] = 0.5;
        let g = elasticities(&FrontierCoefficients(b), &[E * E, 1.0, 1.0], 0.0).unwrap();
        assert_relative_eq!(g[0], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn returns_to_scale_sums() {
        assert_relative_eq!(returns_to_scale(&[0.4, 0.3, 0.3]), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn eq12_technical_change() {
        let mut b = [0.0; N_TERMS];
        b[3] = 0.065;
        b[10] = -0.015;
        b[11] = 0.3;
        let beta = FrontierCoefficients(b);
        let ln_x = [1.0, 2.0, 3.0];
        assert_relative_eq!(
            technical_change(&beta, &ln_x, 1.0, TechnicalChange::TimeOnly),
            0.050,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            technical_change(&beta, &ln_x, 1.0, TechnicalChange::FullDerivative),
            0.350,
            epsilon = 1e-15
        );
        b[10] = 0.0;
        let flat = FrontierCoefficients(b);
        assert_eq!(
            technical_change(&flat, &ln_x, 0.0, TechnicalChange::TimeOnly),
            technical_change(&flat, &ln_x, 9.0, TechnicalChange::TimeOnly)
        );
    }

    fn arb_beta() -> impl Strategy<Value = FrontierCoefficients> {
        prop::array::uniform14(-1.0f64..1.0).prop_map(FrontierCoefficients)
    }

    proptest! {
        #[test]
        fn elasticity_matches_central_difference(
            beta in arb_beta(),
            ln_x in prop::array::uniform3(-2.0f64..2.0),
            t in 0.0f64..10.0,
        ) {
            let step = 1e-5;
            let gamma = elasticities_at(&beta, &ln_x, t);
            for n in 0..N_INPUTS {
                let mut up = ln_x;
                let mut down = ln_x;
                up[n] += step;
                down[n] -= step;
                let fd = (log_frontier(&beta, &up, t) - log_frontier(&beta, &down, t)) / (2.0 * step);
                prop_assert!((fd - gamma[n]).abs() <= 1e-6 * gamma[n].abs().max(1.0));
            }
        }

        #[test]
        fn full_technical_change_matches_central_difference(
            beta in arb_beta(),
            ln_x in prop::array::uniform3(-2.0f64..2.0),
            t in 0.0f64..10.0,
        ) {
            let step = 1e-5;
            let fd = (log_frontier(&beta, &ln_x, t + step) - log_frontier(&beta, &ln_x, t - step)) / (2.0 * step);
            let dt = technical_change(&beta, &ln_x, t, TechnicalChange::FullDerivative);
            prop_assert!((fd - dt).abs() <= 1e-6 * dt.abs().max(1.0));
        }
    }
}
