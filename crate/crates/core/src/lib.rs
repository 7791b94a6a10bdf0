//! Assimilative causal inference (ACI) and causal influence ranges (CIR) for
//! conditionally Gaussian nonlinear systems.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cir;
pub mod config;
pub mod error;
pub mod experiment;
pub mod filter;
pub mod info;
pub mod io;
pub mod linalg;
pub mod model;
pub mod models;
#[cfg(feature = "validation")]
pub mod oracle;
pub mod plot;
pub mod query;
pub mod sim;
pub mod smoother;
#[cfg(feature = "validation")]
pub mod validation;

pub use error::{Error, Result};
pub use filter::{run_filter, FilterSeries, GaussianState};
pub use model::{CgnsModel, Coefficients, Trajectory};
pub use query::{run_query, AnalysisConfig, CausalQuery, ConditioningMode};
pub use smoother::{complete_smoother, BankConfig, SmootherBank};
