//! Algorithms for auditing a black-box recidivism risk score from cohort data.
//!
//! The crate is `no_std` and only needs an allocator. Everything that touches
//! files, the clock or the terminal lives in the companion `score-audit` crate.
//!
//! Pipeline, roughly in order:
//!
//! * [`records`]: validated cohort (persons, charges, probation events,
//!   assessments) plus the date rules that turn raw events into facts.
//! * [`subscales`]: capped criminal-history components per assessment.
//! * [`profile`]: one analysis row per assessment.
//! * [`lowerbound`]: age component reconstruction from the scatter's lower
//!   envelope, age outliers, and the violence-history step function.
//! * [`residuals`]: remainders and paired ablation regressions ([`ml`]).
//! * [`fairness`]: group confusion rates and the category logistic regression.
//! * [`anomalies`]: assessments inconsistent with the reconstruction.
//! * [`synthoracle`]: synthetic cohorts with known additive ground truth.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod anomalies;
pub mod error;
pub mod fairness;
pub mod linalg;
pub mod lowerbound;
pub mod lp;
pub mod ml;
pub mod profile;
pub mod records;
pub mod residuals;
pub mod rng;
pub mod subscales;
pub mod synthoracle;

pub use error::{Error, Result};
