//! Small area estimation of a composite headcount indicator.
//!
//! The crate fits unit-level random-intercept logit models on survey data,
//! predicts census-missing deprivation indicators for every census unit,
//! aggregates the weighted deprivation score into a per-domain headcount by
//! Monte Carlo, and measures uncertainty with a parametric bootstrap.
//!
//! Everything here is `no_std` + `alloc`. Enable `parallel` to spread Monte
//! Carlo replicates, bootstrap replicates and design-based simulation runs
//! over a rayon pool; results are bit-identical with or without it.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod estimator;
pub mod glmm;
pub mod indicator;
pub mod math;
pub mod oracle;
pub mod rng;
pub mod simulation;
pub mod uncertainty;

mod par;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use data::{AlignmentReport, Dataset, DomainId, Level, Role, UnitRecord};
pub use error::{Error, Result};
pub use estimator::{estimate_headcount, HeadcountEstimate};
pub use glmm::{fit, FitConfig, GlmmFit};
pub use indicator::IndicatorSpec;
pub use uncertainty::{bootstrap_mse, cv, BootstrapConfig};
