//! Fixed-effects stochastic frontier estimation on unbalanced firm-year
//! panels, with a translog production frontier, scaled half-normal
//! inefficiency and a Divisia decomposition of productivity change.

pub mod error;
pub mod estimator;
pub mod likelihood;
pub mod normal;
pub mod numdiff;
pub mod panel;
pub mod postestimation;
pub mod simulate;
pub mod tfp;
pub mod translog;

pub use error::{Error, Result};
