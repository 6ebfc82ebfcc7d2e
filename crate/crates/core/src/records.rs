//! Cohort records and the date rules applied to them.
//!
//! Ingestion takes string rows (already split by a CSV reader) and produces
//! an immutable [`CohortDataset`]. All dates are calendar days; windows are
//! inclusive at both ends unless stated otherwise.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CURRENT_OFFENSE_WINDOW_DAYS: i64 = 30;
pub const RECIDIVISM_HORIZON_DAYS: i64 = 730;
pub const T_ON_DAYS: i64 = 365;
pub const T_OFF_DAYS: i64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Female,
    Male,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Race {
    AfricanAmerican,
    Caucasian,
    Hispanic,
    Asian,
    NativeAmerican,
    Other,
}

impl Race {
    pub const ALL: [Race; 6] = [
        Race::AfricanAmerican,
        Race::Caucasian,
        Race::Hispanic,
        Race::Asian,
        Race::NativeAmerican,
        Race::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Race::AfricanAmerican => "african_american",
            Race::Caucasian => "caucasian",
            Race::Hispanic => "hispanic",
            Race::Asian => "asian",
            Race::NativeAmerican => "native_american",
            Race::Other => "other",
        }
    }
}

impl fmt::Display for Race {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Female => "female",
            Sex::Male => "male",
            Sex::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    General,
    Violent,
}

impl ScoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::General => "general",
            ScoreKind::Violent => "violent",
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for ScoreKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match normalize_token(s).as_str() {
            "general" | "risk_of_recidivism" => Ok(ScoreKind::General),
            "violent" | "risk_of_violence" => Ok(ScoreKind::Violent),
            _ => Err(Error::Invalid(format!("unknown score kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pretrial,
    Other,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Pretrial => "pretrial",
            Stage::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbationKind {
    On,
    Off,
    Revocation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Person {
    pub person_id: String,
    pub date_of_birth: NaiveDate,
    pub sex: Sex,
    pub race: Race,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Charge {
    pub person_id: String,
    pub charge_date: NaiveDate,
    pub statute: String,
    pub degree: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbationEvent {
    pub person_id: String,
    pub event_date: NaiveDate,
    pub kind: ProbationKind,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub assessment_id: String,
    pub person_id: String,
    pub screening_date: NaiveDate,
    pub score_kind: ScoreKind,
    pub raw_score: f64,
    pub decile_score: u8,
    pub stage: Stage,
    /// Jail sentences of 30+ days before the current offense, when supplied.
    pub jail30: Option<u32>,
    /// Prison commitments including the current one, when supplied.
    pub prison: Option<u32>,
}

/// Raw string rows as read from the four input files. `line` is the 1-based
/// physical line in the source file (header is line 1).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonRow {
    pub line: u64,
    pub person_id: String,
    pub dob: String,
    pub sex: String,
    pub race: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChargeRow {
    pub line: u64,
    pub person_id: String,
    pub charge_date: String,
    pub statute: String,
    pub degree: String,
    pub description: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRow {
    pub line: u64,
    pub person_id: String,
    pub event_date: String,
    pub description: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentRow {
    pub line: u64,
    pub assessment_id: String,
    pub person_id: String,
    pub screening_date: String,
    pub score_kind: String,
    pub raw_score: String,
    pub decile_score: String,
    pub stage: String,
    pub jail30: Option<String>,
    pub prison: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawCohort {
    pub persons: Vec<PersonRow>,
    pub charges: Vec<ChargeRow>,
    pub events: Vec<EventRow>,
    pub assessments: Vec<AssessmentRow>,
}

/// Event description → probation kind. Matching ignores case and
/// surrounding whitespace; unlisted descriptions are not probation events.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbationVocabulary {
    pub on: Vec<String>,
    pub off: Vec<String>,
    pub revocation: Vec<String>,
}

impl Default for ProbationVocabulary {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            on: v(&[
                "File Order Of Probation",
                "File Order Placing Defendant On Probation",
                "Order Of Probation",
                "Sentenced To Probation",
                "Placed On Probation",
            ]),
            off: v(&[
                "File Order Of Termination Of Probation",
                "File Order Terminating Probation",
                "File Order Of Early Termination Of Probation",
                "Probation Terminated",
                "Probation Completed",
            ]),
            revocation: v(&[
                "File Order Of Revocation Of Probation",
                "Probation Revoked",
            ]),
        }
    }
}

impl ProbationVocabulary {
    pub fn classify(&self, description: &str) -> Option<ProbationKind> {
        let d = description.trim();
        let hit = |xs: &[String]| xs.iter().any(|x| x.trim().eq_ignore_ascii_case(d));
        if hit(&self.revocation) {
            Some(ProbationKind::Revocation)
        } else if hit(&self.off) {
            Some(ProbationKind::Off)
        } else if hit(&self.on) {
            Some(ProbationKind::On)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub pretrial_only: bool,
    pub end_date: Option<NaiveDate>,
    pub vocabulary: ProbationVocabulary,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            pretrial_only: true,
            end_date: None,
            vocabulary: ProbationVocabulary::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    DegreeZero,
    NotPretrial,
    DuplicateAssessment,
    NotProbationEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub file: String,
    pub line: u64,
    pub reason: ExclusionReason,
    pub id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileCounts {
    pub read: usize,
    pub retained: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub persons: FileCounts,
    pub charges: FileCounts,
    pub events: FileCounts,
    pub assessments: FileCounts,
    pub exclusions: Vec<Exclusion>,
    pub exclusion_counts: BTreeMap<ExclusionReason, usize>,
    pub warnings: Vec<String>,
    pub end_date: Option<NaiveDate>,
}

impl Provenance {
    fn exclude(&mut self, file: &str, line: u64, reason: ExclusionReason, id: &str) {
        self.exclusions.push(Exclusion {
            file: file.to_string(),
            line,
            reason,
            id: id.to_string(),
        });
        *self.exclusion_counts.entry(reason).or_insert(0) += 1;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Span {
    start: usize,
    end: usize,
}

/// Validated cohort. Persons are sorted by id; charges and probation events
/// are sorted by (person, date); assessments by (person, date, kind, id).
#[derive(Debug, Clone, PartialEq)]
pub struct CohortDataset {
    persons: Vec<Person>,
    charges: Vec<Charge>,
    events: Vec<ProbationEvent>,
    assessments: Vec<Assessment>,
    end_date: NaiveDate,
    provenance: Provenance,
    index: BTreeMap<String, (usize, Span, Span)>,
}

fn normalize_token(s: &str) -> String {
    s.trim()
        .chars()
        .map(|c| match c {
            '-' | ' ' => '_',
            c => c.to_ascii_lowercase(),
        })
        .collect()
}

fn parse_date(file: &str, line: u64, field: &str, s: &str) -> Result<NaiveDate> {
    let t = s.trim();
    let head = t.get(..10).unwrap_or(t);
    NaiveDate::parse_from_str(head, "%Y-%m-%d").map_err(|_| Error::Malformed {
        file: file.to_string(),
        line,
        message: format!("{field}: not an ISO-8601 date: {s:?}"),
    })
}

fn require(file: &str, line: u64, field: &str, s: &str) -> Result<String> {
    let t = s.trim();
    if t.is_empty() {
        return Err(Error::Malformed {
            file: file.to_string(),
            line,
            message: format!("{field} is empty"),
        });
    }
    Ok(t.to_string())
}

fn parse_count(file: &str, line: u64, field: &str, s: &Option<String>) -> Result<Option<u32>> {
    match s.as_deref().map(str::trim) {
        None | Some("") => Ok(None),
        Some(t) => t.parse().map(Some).map_err(|_| Error::Malformed {
            file: file.to_string(),
            line,
            message: format!("{field}: not a nonnegative integer: {t:?}"),
        }),
    }
}

pub fn parse_sex(s: &str) -> Option<Sex> {
    match normalize_token(s).as_str() {
        "female" | "f" => Some(Sex::Female),
        "male" | "m" => Some(Sex::Male),
        "unknown" => Some(Sex::Unknown),
        _ => None,
    }
}

pub fn parse_race(s: &str) -> Option<Race> {
    match normalize_token(s).as_str() {
        "african_american" | "black" => Some(Race::AfricanAmerican),
        "caucasian" | "white" => Some(Race::Caucasian),
        "hispanic" => Some(Race::Hispanic),
        "asian" => Some(Race::Asian),
        "native_american" => Some(Race::NativeAmerican),
        "other" => Some(Race::Other),
        _ => None,
    }
}

/// Orders two assessment ids: numerically when both are digit strings,
/// lexicographically otherwise.
fn id_cmp(a: &str, b: &str, numeric: bool) -> Ordering {
    if numeric {
        let a = a.trim_start_matches('0');
        let b = b.trim_start_matches('0');
        a.len().cmp(&b.len()).then_with(|| a.cmp(b))
    } else {
        a.cmp(b)
    }
}

fn is_numeric_id(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Keeps one assessment per (person, screening date, score kind): the one
/// with the larger id. Ids in a group are compared numerically when all are
/// digit strings. Output is sorted by (person, date, kind).
pub fn dedupe_assessments(assessments: Vec<Assessment>) -> Vec<Assessment> {
    dedupe_with_losers(assessments).0
}

fn dedupe_with_losers(assessments: Vec<Assessment>) -> (Vec<Assessment>, Vec<Assessment>) {
    let mut groups: BTreeMap<(String, NaiveDate, ScoreKind), Vec<Assessment>> = BTreeMap::new();
    for a in assessments {
        groups
            .entry((a.person_id.clone(), a.screening_date, a.score_kind))
            .or_default()
            .push(a);
    }
    let mut kept = Vec::with_capacity(groups.len());
    let mut dropped = Vec::new();
    for (_, mut group) in groups {
        let numeric = group.iter().all(|a| is_numeric_id(&a.assessment_id));
        group.sort_by(|a, b| id_cmp(&a.assessment_id, &b.assessment_id, numeric));
        let winner = group.pop().expect("groups are nonempty");
        dropped.extend(group);
        kept.push(winner);
    }
    (kept, dropped)
}

/// Age in whole years on `date`.
pub fn age_at(date_of_birth: NaiveDate, date: NaiveDate) -> Result<u32> {
    date.years_since(date_of_birth).ok_or(Error::DateBeforeBirth {
        dob: date_of_birth,
        date,
    })
}

/// True when `date` is before the 18th birthday.
pub fn is_juvenile(date_of_birth: NaiveDate, date: NaiveDate) -> bool {
    matches!(age_at(date_of_birth, date), Ok(a) if a < 18)
}

/// The charges that triggered a screening: every charge on the latest charge
/// date within the 30 days up to and including the screening date.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentOffense<'a> {
    pub offense_date: Option<NaiveDate>,
    pub charges: Vec<&'a Charge>,
}

impl CurrentOffense<'_> {
    pub fn present(&self) -> bool {
        self.offense_date.is_some()
    }
}

/// `charges` must belong to one person; order does not matter.
pub fn resolve_current_offense(charges: &[Charge], screening_date: NaiveDate) -> CurrentOffense<'_> {
    let lo = screening_date - Duration::days(CURRENT_OFFENSE_WINDOW_DAYS);
    let offense_date = charges
        .iter()
        .map(|c| c.charge_date)
        .filter(|&d| d >= lo && d <= screening_date)
        .max();
    let charges = match offense_date {
        Some(d) => charges.iter().filter(|c| c.charge_date == d).collect(),
        None => Vec::new(),
    };
    CurrentOffense {
        offense_date,
        charges,
    }
}

/// Whether `date` falls in a probation period. `events` must be one person's
/// events sorted by date; revocations act as "off" events.
///
/// * an "on" directly followed by an "off" covers the closed interval between them;
/// * an "on" followed by another "on", or last, covers `t_on` days after it;
/// * an "off" preceded by another "off", or first, covers `t_off` days before it.
pub fn probation_status_at(events: &[ProbationEvent], date: NaiveDate, t_on: i64, t_off: i64) -> bool {
    let is_on = |e: &ProbationEvent| e.kind == ProbationKind::On;
    for (i, e) in events.iter().enumerate() {
        let prev = if i > 0 { events.get(i - 1) } else { None };
        let next = events.get(i + 1);
        if is_on(e) {
            match next {
                Some(n) if !is_on(n) => {
                    if date >= e.event_date && date <= n.event_date {
                        return true;
                    }
                }
                _ => {
                    if date >= e.event_date && date <= e.event_date + Duration::days(t_on) {
                        return true;
                    }
                }
            }
        } else if prev.is_none_or(|p| !is_on(p))
            && date <= e.event_date
            && date >= e.event_date - Duration::days(t_off)
        {
            return true;
        }
    }
    false
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecidivismLabel {
    pub general: bool,
    pub violent: bool,
    pub observable: bool,
}

/// Two-year recidivism: any charge in `(screening_date, screening_date + horizon]`.
/// The row is observable only when the data extend `horizon` days past the
/// screening date.
pub fn label_recidivism(
    charges: &[Charge],
    screening_date: NaiveDate,
    end_date: NaiveDate,
    horizon: i64,
    is_violent: impl Fn(&Charge) -> bool,
) -> RecidivismLabel {
    let hi = screening_date + Duration::days(horizon);
    let window = || {
        charges
            .iter()
            .filter(move |c| c.charge_date > screening_date && c.charge_date <= hi)
    };
    RecidivismLabel {
        general: window().next().is_some(),
        violent: window().any(|c| is_violent(c)),
        observable: (end_date - screening_date).num_days() >= horizon,
    }
}

impl CohortDataset {
    /// Validates raw rows and applies the exclusion rules.
    pub fn ingest(raw: &RawCohort, config: &IngestConfig) -> Result<Self> {
        let mut prov = Provenance::default();

        let mut persons = Vec::with_capacity(raw.persons.len());
        let mut seen = BTreeSet::new();
        prov.persons.read = raw.persons.len();
        for r in &raw.persons {
            let f = "persons.csv";
            let person_id = require(f, r.line, "person_id", &r.person_id)?;
            if !seen.insert(person_id.clone()) {
                return Err(Error::DuplicatePerson(person_id));
            }
            let date_of_birth = parse_date(f, r.line, "dob", &r.dob)?;
            let sex = parse_sex(&r.sex).unwrap_or_else(|| {
                prov.warnings
                    .push(format!("{f}:{}: unknown sex {:?} mapped to unknown", r.line, r.sex));
                Sex::Unknown
            });
            let race = parse_race(&r.race).unwrap_or_else(|| {
                prov.warnings
                    .push(format!("{f}:{}: unknown race {:?} mapped to other", r.line, r.race));
                Race::Other
            });
            persons.push(Person {
                person_id,
                date_of_birth,
                sex,
                race,
            });
        }

        let mut charges = Vec::with_capacity(raw.charges.len());
        prov.charges.read = raw.charges.len();
        for r in &raw.charges {
            let f = "charges.csv";
            let person_id = require(f, r.line, "person_id", &r.person_id)?;
            let charge_date = parse_date(f, r.line, "charge_date", &r.charge_date)?;
            let degree = r.degree.trim().to_string();
            if degree == "(0)" {
                prov.exclude(f, r.line, ExclusionReason::DegreeZero, &person_id);
                continue;
            }
            charges.push(Charge {
                person_id,
                charge_date,
                statute: r.statute.trim().to_string(),
                degree,
                description: r.description.trim().to_string(),
            });
        }

        let mut events = Vec::new();
        prov.events.read = raw.events.len();
        for r in &raw.events {
            let f = "events.csv";
            let person_id = require(f, r.line, "person_id", &r.person_id)?;
            let event_date = parse_date(f, r.line, "event_date", &r.event_date)?;
            match config.vocabulary.classify(&r.description) {
                Some(kind) => events.push(ProbationEvent {
                    person_id,
                    event_date,
                    kind,
                    description: r.description.trim().to_string(),
                }),
                None => prov.exclude(f, r.line, ExclusionReason::NotProbationEvent, &person_id),
            }
        }

        let mut assessments = Vec::with_capacity(raw.assessments.len());
        let mut lines = BTreeMap::new();
        prov.assessments.read = raw.assessments.len();
        let mut missing_sentences = 0usize;
        for r in &raw.assessments {
            let f = "assessments.csv";
            let assessment_id = require(f, r.line, "assessment_id", &r.assessment_id)?;
            let person_id = require(f, r.line, "person_id", &r.person_id)?;
            let screening_date = parse_date(f, r.line, "screening_date", &r.screening_date)?;
            let score_kind: ScoreKind = r.score_kind.parse().map_err(|_| Error::Malformed {
                file: f.to_string(),
                line: r.line,
                message: format!("score_kind: expected general or violent, got {:?}", r.score_kind),
            })?;
            let raw_score: f64 = r
                .raw_score
                .trim()
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| Error::Malformed {
                    file: f.to_string(),
                    line: r.line,
                    message: format!("raw_score: not a finite number: {:?}", r.raw_score),
                })?;
            let decile_score: u8 = r
                .decile_score
                .trim()
                .parse()
                .ok()
                .filter(|d| (1..=10).contains(d))
                .ok_or_else(|| Error::Malformed {
                    file: f.to_string(),
                    line: r.line,
                    message: format!("decile_score: expected 1..10, got {:?}", r.decile_score),
                })?;
            let stage = if normalize_token(&r.stage) == "pretrial" {
                Stage::Pretrial
            } else {
                Stage::Other
            };
            let jail30 = parse_count(f, r.line, "jail30", &r.jail30)?;
            let prison = parse_count(f, r.line, "prison", &r.prison)?;
            if config.pretrial_only && stage != Stage::Pretrial {
                prov.exclude(f, r.line, ExclusionReason::NotPretrial, &assessment_id);
                continue;
            }
            if jail30.is_none() || prison.is_none() {
                missing_sentences += 1;
            }
            lines.insert(assessment_id.clone(), r.line);
            assessments.push(Assessment {
                assessment_id,
                person_id,
                screening_date,
                score_kind,
                raw_score,
                decile_score,
                stage,
                jail30,
                prison,
            });
        }
        if missing_sentences > 0 {
            prov.warnings.push(format!(
                "{missing_sentences} assessments lack jail30/prison counts; those components are 0"
            ));
        }
        let (mut assessments, dropped) = dedupe_with_losers(assessments);
        for a in dropped {
            let line = lines.get(&a.assessment_id).copied().unwrap_or(0);
            prov.exclude(
                "assessments.csv",
                line,
                ExclusionReason::DuplicateAssessment,
                &a.assessment_id,
            );
        }

        let orphans = |ids: &mut dyn Iterator<Item = &String>| -> Vec<String> {
            let set: BTreeSet<String> = ids.filter(|id| !seen.contains(*id)).cloned().collect();
            set.into_iter().collect()
        };
        for (kind, ids) in [
            ("charges", orphans(&mut charges.iter().map(|c| &c.person_id))),
            ("events", orphans(&mut events.iter().map(|e| &e.person_id))),
            ("assessments", orphans(&mut assessments.iter().map(|a| &a.person_id))),
        ] {
            if !ids.is_empty() {
                return Err(Error::OrphanIds { kind, ids });
            }
        }
        if assessments.is_empty() {
            return Err(Error::EmptyCohort("no assessments remain after filtering"));
        }

        persons.sort_by(|a, b| a.person_id.cmp(&b.person_id));
        charges.sort();
        events.sort_by(|a, b| {
            (&a.person_id, a.event_date, a.kind, &a.description).cmp(&(
                &b.person_id,
                b.event_date,
                b.kind,
                &b.description,
            ))
        });
        assessments.sort_by(|a, b| {
            (&a.person_id, a.screening_date, a.score_kind)
                .cmp(&(&b.person_id, b.screening_date, b.score_kind))
        });

        let dob: BTreeMap<&str, NaiveDate> = persons
            .iter()
            .map(|p| (p.person_id.as_str(), p.date_of_birth))
            .collect();
        let check = |person: &str, date: NaiveDate| {
            if date <= dob[person] {
                Err(Error::EventBeforeBirth {
                    person: person.to_string(),
                    date,
                })
            } else {
                Ok(())
            }
        };
        for c in &charges {
            check(&c.person_id, c.charge_date)?;
        }
        for e in &events {
            check(&e.person_id, e.event_date)?;
        }
        for a in &assessments {
            check(&a.person_id, a.screening_date)?;
        }

        let end_date = config.end_date.unwrap_or_else(|| {
            charges
                .iter()
                .map(|c| c.charge_date)
                .chain(events.iter().map(|e| e.event_date))
                .chain(assessments.iter().map(|a| a.screening_date))
                .max()
                .expect("assessments are nonempty")
        });
        prov.end_date = Some(end_date);
        prov.persons.retained = persons.len();
        prov.charges.retained = charges.len();
        prov.events.retained = events.len();
        prov.assessments.retained = assessments.len();

        let index = build_index(&persons, &charges, &events);
        Ok(Self {
            persons,
            charges,
            events,
            assessments,
            end_date,
            provenance: prov,
            index,
        })
    }

    pub fn persons(&self) -> &[Person] {
        &self.persons
    }

    pub fn charges(&self) -> &[Charge] {
        &self.charges
    }

    pub fn probation_events(&self) -> &[ProbationEvent] {
        &self.events
    }

    pub fn assessments(&self) -> &[Assessment] {
        &self.assessments
    }

    pub fn end_date(&self) -> NaiveDate {
        self.end_date
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn person(&self, person_id: &str) -> Option<&Person> {
        self.index.get(person_id).map(|&(i, _, _)| &self.persons[i])
    }

    /// One person's charges, sorted by date.
    pub fn charges_of(&self, person_id: &str) -> &[Charge] {
        match self.index.get(person_id) {
            Some(&(_, s, _)) => &self.charges[s.start..s.end],
            None => &[],
        }
    }

    /// One person's probation events, sorted by date.
    pub fn events_of(&self, person_id: &str) -> &[ProbationEvent] {
        match self.index.get(person_id) {
            Some(&(_, _, s)) => &self.events[s.start..s.end],
            None => &[],
        }
    }

    /// Content equality ignoring provenance.
    pub fn same_records(&self, other: &Self) -> bool {
        self.persons == other.persons
            && self.charges == other.charges
            && self.events == other.events
            && self.assessments == other.assessments
            && self.end_date == other.end_date
    }

    /// Rows in the input schema, suitable for writing a canonical copy.
    pub fn to_raw(&self) -> RawCohort {
        let d = |x: NaiveDate| format!("{:04}-{:02}-{:02}", x.year(), x.month(), x.day());
        RawCohort {
            persons: self
                .persons
                .iter()
                .enumerate()
                .map(|(i, p)| PersonRow {
                    line: i as u64 + 2,
                    person_id: p.person_id.clone(),
                    dob: d(p.date_of_birth),
                    sex: p.sex.as_str().to_string(),
                    race: p.race.as_str().to_string(),
                })
                .collect(),
            charges: self
                .charges
                .iter()
                .enumerate()
                .map(|(i, c)| ChargeRow {
                    line: i as u64 + 2,
                    person_id: c.person_id.clone(),
                    charge_date: d(c.charge_date),
                    statute: c.statute.clone(),
                    degree: c.degree.clone(),
                    description: c.description.clone(),
                })
                .collect(),
            events: self
                .events
                .iter()
                .enumerate()
                .map(|(i, e)| EventRow {
                    line: i as u64 + 2,
                    person_id: e.person_id.clone(),
                    event_date: d(e.event_date),
                    description: e.description.clone(),
                })
                .collect(),
            assessments: self
                .assessments
                .iter()
                .enumerate()
                .map(|(i, a)| AssessmentRow {
                    line: i as u64 + 2,
                    assessment_id: a.assessment_id.clone(),
                    person_id: a.person_id.clone(),
                    screening_date: d(a.screening_date),
                    score_kind: a.score_kind.as_str().to_string(),
                    raw_score: format!("{}", a.raw_score),
                    decile_score: format!("{}", a.decile_score),
                    stage: a.stage.as_str().to_string(),
                    jail30: a.jail30.map(|x| format!("{x}")),
                    prison: a.prison.map(|x| format!("{x}")),
                })
                .collect(),
        }
    }
}

fn build_index(
    persons: &[Person],
    charges: &[Charge],
    events: &[ProbationEvent],
) -> BTreeMap<String, (usize, Span, Span)> {
    let mut index: BTreeMap<String, (usize, Span, Span)> = persons
        .iter()
        .enumerate()
        .map(|(i, p)| (p.person_id.clone(), (i, Span::default(), Span::default())))
        .collect();
    let mut i = 0;
    while i < charges.len() {
        let start = i;
        while i < charges.len() && charges[i].person_id == charges[start].person_id {
            i += 1;
        }
        if let Some(e) = index.get_mut(&charges[start].person_id) {
            e.1 = Span { start, end: i };
        }
    }
    let mut i = 0;
    while i < events.len() {
        let start = i;
        while i < events.len() && events[i].person_id == events[start].person_id {
            i += 1;
        }
        if let Some(e) = index.get_mut(&events[start].person_id) {
            e.2 = Span { start, end: i };
        }
    }
    index
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn day(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn assessment(id: &str, person: &str) -> Assessment {
        Assessment {
            assessment_id: id.to_string(),
            person_id: person.to_string(),
            screening_date: day("2013-05-01"),
            score_kind: ScoreKind::General,
            raw_score: -1.0,
            decile_score: 3,
            stage: Stage::Pretrial,
            jail30: None,
            prison: None,
        }
    }

    fn charge(date: &str) -> Charge {
        Charge {
            person_id: "p".into(),
            charge_date: day(date),
            statute: "812.014".into(),
            degree: "(M1)".into(),
            description: String::new(),
        }
    }

    fn ev(date: &str, kind: ProbationKind) -> ProbationEvent {
        ProbationEvent {
            person_id: "p".into(),
            event_date: day(date),
            kind,
            description: String::new(),
        }
    }

    #[test]
    fn dedup_keeps_larger_id() {
        let out = dedupe_assessments(vec![assessment("A17", "p"), assessment("A23", "p")]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].assessment_id, "A23");
        let out = dedupe_assessments(vec![assessment("5", "p"), assessment("9", "p"), assessment("2", "p")]);
        assert_eq!(out[0].assessment_id, "9");
        let out = dedupe_assessments(vec![assessment("9", "p"), assessment("10", "p")]);
        assert_eq!(out[0].assessment_id, "10");
        let out = dedupe_assessments(vec![assessment("9", "p"), assessment("10a", "p")]);
        assert_eq!(out[0].assessment_id, "9");
        assert!(dedupe_assessments(Vec::new()).is_empty());
    }

    #[test]
    fn age_floors_at_birthday() {
        let dob = day("1990-06-15");
        assert_eq!(age_at(dob, day("2013-06-14")).unwrap(), 22);
        assert_eq!(age_at(dob, day("2013-06-15")).unwrap(), 23);
        assert!(age_at(dob, day("1990-06-14")).is_err());
        assert!(is_juvenile(dob, day("2008-05-01")));
        assert!(!is_juvenile(dob, day("2008-06-15")));
    }

    #[test]
    fn current_offense_window() {
        let sd = day("2013-05-01");
        let cs = vec![charge("2013-04-30"), charge("2013-02-20")];
        let co = resolve_current_offense(&cs, sd);
        assert_eq!(co.offense_date, Some(day("2013-04-30")));
        assert_eq!(co.charges.len(), 1);

        let cs = vec![charge("2013-03-22")];
        assert!(!resolve_current_offense(&cs, sd).present());

        let cs = vec![charge("2013-04-28"), charge("2013-04-28"), charge("2013-05-02")];
        let co = resolve_current_offense(&cs, sd);
        assert_eq!(co.charges.len(), 2);

        // Exactly 30 days before is still inside.
        let cs = vec![charge("2013-04-01")];
        assert!(resolve_current_offense(&cs, sd).present());
    }

    #[test]
    fn probation_rules() {
        use ProbationKind::*;
        let evs = vec![ev("2013-01-01", On), ev("2013-06-01", Off)];
        assert!(probation_status_at(&evs, day("2013-03-15"), 365, 30));
        assert!(!probation_status_at(&evs, day("2013-06-02"), 365, 30));

        let evs = vec![ev("2012-01-01", On), ev("2012-06-01", On)];
        assert!(probation_status_at(&evs, day("2012-06-01") + Duration::days(200), 365, 30));
        assert!(!probation_status_at(&evs, day("2012-06-01") + Duration::days(366), 365, 30));
        // The first "on" of a pair also opens a t_on window.
        assert!(probation_status_at(&evs, day("2012-03-01"), 365, 30));

        let evs = vec![ev("2013-06-01", Off)];
        assert!(!probation_status_at(&evs, day("2013-06-01") - Duration::days(45), 365, 30));
        assert!(probation_status_at(&evs, day("2013-06-01") - Duration::days(30), 365, 30));

        let evs = vec![ev("2012-01-01", On), ev("2012-03-01", Revocation), ev("2012-09-01", Off)];
        assert!(probation_status_at(&evs, day("2012-02-01"), 365, 30));
        assert!(probation_status_at(&evs, day("2012-08-15"), 365, 30));
        assert!(!probation_status_at(&evs, day("2012-05-01"), 365, 30));
    }

    #[test]
    fn recidivism_window_and_observability() {
        let sd = day("2013-01-01");
        let end = day("2016-01-01");
        let at = |d: i64| {
            let mut c = charge("2000-01-01");
            c.charge_date = sd + Duration::days(d);
            vec![c]
        };
        assert!(label_recidivism(&at(729), sd, end, 730, |_| false).general);
        assert!(label_recidivism(&at(730), sd, end, 730, |_| false).general);
        assert!(!label_recidivism(&at(731), sd, end, 730, |_| false).general);
        assert!(!label_recidivism(&at(0), sd, end, 730, |_| false).general);
        let l = label_recidivism(&at(10), sd, end, 730, |_| true);
        assert!(l.violent && l.observable);
        let l = label_recidivism(&[], sd, sd + Duration::days(400), 730, |_| false);
        assert!(!l.observable);
    }

    fn raw_fixture() -> RawCohort {
        RawCohort {
            persons: vec![PersonRow {
                line: 2,
                person_id: "p1".into(),
                dob: "1990-01-01".into(),
                sex: "Male".into(),
                race: "African-American".into(),
            }],
            charges: vec![ChargeRow {
                line: 2,
                person_id: "p1".into(),
                charge_date: "2013-01-01".into(),
                statute: "316.193".into(),
                degree: "(0)".into(),
                description: "minor".into(),
            }],
            events: vec![],
            assessments: vec![AssessmentRow {
                line: 2,
                assessment_id: "1".into(),
                person_id: "p1".into(),
                screening_date: "2013-01-05".into(),
                score_kind: "general".into(),
                raw_score: "-1.5".into(),
                decile_score: "2".into(),
                stage: "pretrial".into(),
                jail30: None,
                prison: None,
            }],
        }
    }

    #[test]
    fn degree_zero_charges_are_excluded() {
        let ds = CohortDataset::ingest(&raw_fixture(), &IngestConfig::default()).unwrap();
        assert!(ds.charges().is_empty());
        assert_eq!(ds.provenance().exclusion_counts[&ExclusionReason::DegreeZero], 1);
        assert_eq!(ds.persons()[0].race, Race::AfricanAmerican);
    }

    #[test]
    fn orphan_charge_is_named() {
        let mut raw = raw_fixture();
        raw.charges[0].person_id = "ghost".into();
        raw.charges[0].degree = "(F3)".into();
        match CohortDataset::ingest(&raw, &IngestConfig::default()) {
            Err(Error::OrphanIds { kind, ids }) => {
                assert_eq!(kind, "charges");
                assert_eq!(ids, vec!["ghost".to_string()]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let mut raw = raw_fixture();
        raw.assessments[0].decile_score = "11".into();
        match CohortDataset::ingest(&raw, &IngestConfig::default()) {
            Err(Error::Malformed { file, line, .. }) => {
                assert_eq!(file, "assessments.csv");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_after_pretrial_filter() {
        let mut raw = raw_fixture();
        raw.assessments[0].stage = "probation".into();
        assert!(matches!(
            CohortDataset::ingest(&raw, &IngestConfig::default()),
            Err(Error::EmptyCohort(_))
        ));
    }

    #[test]
    fn unknown_race_warns() {
        let mut raw = raw_fixture();
        raw.persons[0].race = "martian".into();
        let ds = CohortDataset::ingest(&raw, &IngestConfig::default()).unwrap();
        assert_eq!(ds.persons()[0].race, Race::Other);
        assert_eq!(ds.provenance().warnings.len(), 2);
    }

    #[test]
    fn reingest_is_identity() {
        let mut raw = raw_fixture();
        raw.charges[0].degree = "(F3)".into();
        raw.events.push(EventRow {
            line: 2,
            person_id: "p1".into(),
            event_date: "2012-01-01".into(),
            description: "File Order Of Probation".into(),
        });
        raw.events.push(EventRow {
            line: 3,
            person_id: "p1".into(),
            event_date: "2012-02-01".into(),
            description: "File Affidavit Of Defense".into(),
        });
        let a = CohortDataset::ingest(&raw, &IngestConfig::default()).unwrap();
        let b = CohortDataset::ingest(&a.to_raw(), &IngestConfig::default()).unwrap();
        assert!(a.same_records(&b));
        assert_eq!(a.probation_events().len(), 1);
    }
}
