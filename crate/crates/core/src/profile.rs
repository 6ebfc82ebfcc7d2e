//! One analysis row per assessment: ages, demographics, subscale components,
//! current-offense flags and recidivism labels.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::records::{self, CohortDataset, Race, RecidivismLabel, ScoreKind, Sex, RECIDIVISM_HORIZON_DAYS};
use crate::subscales::{self, StatuteClass, SubscaleConfig, SubscaleSums, SubscaleVector};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurrentOffenseFlags {
    pub n_charges: u32,
    pub felony: bool,
    pub violent: bool,
}

impl CurrentOffenseFlags {
    /// No felony among the current charges.
    pub fn misdemeanor(&self) -> bool {
        !self.felony
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub assessment_id: String,
    pub person_id: String,
    pub score_kind: ScoreKind,
    pub raw_score: f64,
    pub decile_score: u8,
    pub age: u32,
    /// Age at the earliest charge on or before the screening date.
    pub age_first: Option<u32>,
    pub sex: Sex,
    pub race: Race,
    /// `None` when the current offense is missing.
    pub subscales: Option<SubscaleVector>,
    pub sums: Option<SubscaleSums>,
    pub current: Option<CurrentOffenseFlags>,
    pub recidivism: RecidivismLabel,
}

impl ProfileRow {
    pub fn computable(&self) -> bool {
        self.subscales.is_some()
    }
}

/// Builds rows for every assessment, in dataset order.
pub fn build_profiles(dataset: &CohortDataset, config: &SubscaleConfig) -> Vec<ProfileRow> {
    let violent = |c: &records::Charge| {
        subscales::classify_statute(&config.statutes, &c.statute, &c.degree).contains(StatuteClass::VIOLENT)
    };
    dataset
        .assessments()
        .iter()
        .map(|a| {
            let person = dataset
                .person(&a.person_id)
                .expect("ingestion guarantees referential integrity");
            let charges = dataset.charges_of(&a.person_id);
            let dob = person.date_of_birth;
            let age = records::age_at(dob, a.screening_date).expect("ingestion checks dates");
            let age_first = charges
                .iter()
                .map(|c| c.charge_date)
                .filter(|&d| d <= a.screening_date)
                .min()
                .and_then(|d| records::age_at(dob, d).ok());
            let offense = records::resolve_current_offense(charges, a.screening_date);
            let current = offense.present().then(|| CurrentOffenseFlags {
                n_charges: offense.charges.len() as u32,
                felony: offense.charges.iter().any(|c| {
                    subscales::classify_statute(&config.statutes, &c.statute, &c.degree)
                        .contains(StatuteClass::FELONY)
                }),
                violent: offense.charges.iter().any(|c| violent(c)),
            });
            let sv = subscales::compute_subscales(dataset, a, config);
            ProfileRow {
                assessment_id: a.assessment_id.clone(),
                person_id: a.person_id.clone(),
                score_kind: a.score_kind,
                raw_score: a.raw_score,
                decile_score: a.decile_score,
                age,
                age_first,
                sex: person.sex,
                race: person.race,
                sums: sv.as_ref().map(subscales::sums),
                subscales: sv,
                current,
                recidivism: records::label_recidivism(
                    charges,
                    a.screening_date,
                    dataset.end_date(),
                    RECIDIVISM_HORIZON_DAYS,
                    violent,
                ),
            }
        })
        .collect()
}

/// Rows of one score kind.
pub fn of_kind(rows: &[ProfileRow], kind: ScoreKind) -> Vec<&ProfileRow> {
    rows.iter().filter(|r| r.score_kind == kind).collect()
}
