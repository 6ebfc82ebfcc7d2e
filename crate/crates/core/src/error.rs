use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;

use crate::records::ScoreKind;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{file}:{line}: {message}")]
    Malformed {
        file: String,
        line: u64,
        message: String,
    },
    #[error("{kind} rows reference unknown person ids: {}", ids.join(", "))]
    OrphanIds { kind: &'static str, ids: Vec<String> },
    #[error("duplicate person id {0}")]
    DuplicatePerson(String),
    #[error("person {person}: event on {date} is not after date of birth")]
    EventBeforeBirth { person: String, date: NaiveDate },
    #[error("cohort is empty: {0}")]
    EmptyCohort(&'static str),
    #[error("date {date} precedes date of birth {dob}")]
    DateBeforeBirth { dob: NaiveDate, date: NaiveDate },
    #[error("no candidates for the {0} score; the data assumption cannot be checked")]
    NoCandidates(ScoreKind),
    #[error("degenerate fit: {0}")]
    Degenerate(String),
    #[error("infeasible fit: {0}")]
    Infeasible(String),
    #[error("age {0} outside the supported range [16, 100]")]
    AgeOutOfRange(f64),
    #[error("invalid spline: {0}")]
    InvalidSpline(String),
    #[error("no individuals with zero violence history; cannot anchor g(0) = 0")]
    NoAnchor,
    #[error("component not fitted: {0}")]
    NotFitted(&'static str),
    #[error("complete separation on feature {feature}")]
    Separation { feature: String },
    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
}
