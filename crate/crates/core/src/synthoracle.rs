//! Synthetic cohorts whose raw scores follow a known additive model, so every
//! reconstruction step can be checked against the truth that generated it.
//!
//! Each person gets one general and one violent assessment on the same
//! screening date. Histories are drawn first, the cohort is ingested and its
//! subscale components computed by the same code the audit uses, and only then
//! are scores assigned from those components:
//!
//! ```text
//! raw = f_age(age) + w·(age_first − age) + subscale_term + noise,   w ≤ 0
//! ```
//!
//! The age-at-first-arrest term is nonnegative because `age_first ≤ age`, and
//! so is every subscale term; with the default half-normal noise no row falls
//! below `f_age`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;

use chrono::{Datelike, Duration, Months, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::lowerbound::{AgeSpline, StepFunction, AGE_MAX, AGE_MIN};
use crate::profile::{build_profiles, ProfileRow};
use crate::records::{
    self, AssessmentRow, ChargeRow, CohortDataset, EventRow, IngestConfig, PersonRow, Race, RawCohort, ScoreKind,
};
use crate::rng::{self, streams};
use crate::subscales::SubscaleConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralModel {
    pub age: AgeSpline,
    /// Per-item weights on arrests, jail30, prison and probation sentences.
    pub criminal_weights: [f64; 4],
    pub age_first_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolentModel {
    pub age: AgeSpline,
    /// Contribution of the capped violence-history sum.
    pub violence_step: StepFunction,
    /// Per-item weights on the three noncompliance items.
    pub noncompliance_weights: [f64; 3],
    pub age_first_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sd: f64,
    /// Normal instead of half-normal noise. Rows can then fall below the age
    /// component, which breaks the lower-envelope premise; for stress tests.
    pub symmetric: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaceShare {
    pub race: Race,
    pub share: f64,
    /// Added to the drawn age before truncation.
    #[serde(default)]
    pub age_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationSpec {
    pub age_min: u32,
    pub age_max: u32,
    /// Age is `age_min + Gamma(shape, scale) + age_shift`, redrawn until it
    /// falls in range.
    pub age_shape: f64,
    pub age_scale: f64,
    pub races: Vec<RaceShare>,
    pub female_share: f64,
    /// Share of persons whose current offense is their first charge.
    pub first_arrest_share: f64,
    /// Expected prior arrests per year since the first one.
    pub arrest_rate: f64,
    /// Share of persons whose charges are often violent.
    pub violent_share: f64,
    pub violent_charge_prob: f64,
    pub other_violent_charge_prob: f64,
    /// Chance that a prior arrest leads to probation.
    pub probation_share: f64,
    /// Chance that a probation term is revoked rather than terminated.
    pub revocation_share: f64,
    pub jail30_share: f64,
    pub prison_share: f64,
    /// Yearly rate of new charges at age 18, decaying exponentially with age
    /// and growing with prior arrests. Independent of race.
    pub recid_rate: f64,
    pub recid_age_decay: f64,
    pub recid_history_weight: f64,
    pub screening_start: NaiveDate,
    pub screening_end: NaiveDate,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        let share = |race, share| RaceShare {
            race,
            share,
            age_shift: 0.0,
        };
        Self {
            age_min: 18,
            age_max: 70,
            age_shape: 1.6,
            age_scale: 8.0,
            races: vec![
                share(Race::AfricanAmerican, 0.51),
                share(Race::Caucasian, 0.34),
                share(Race::Hispanic, 0.09),
                share(Race::Asian, 0.005),
                share(Race::NativeAmerican, 0.005),
                share(Race::Other, 0.05),
            ],
            female_share: 0.19,
            first_arrest_share: 0.3,
            arrest_rate: 0.35,
            violent_share: 0.3,
            violent_charge_prob: 0.45,
            other_violent_charge_prob: 0.1,
            probation_share: 0.25,
            revocation_share: 0.3,
            jail30_share: 0.15,
            prison_share: 0.08,
            recid_rate: 0.38,
            recid_age_decay: 0.03,
            recid_history_weight: 0.08,
            screening_start: NaiveDate::from_ymd_opt(2013, 1, 1).expect("valid"),
            screening_end: NaiveDate::from_ymd_opt(2014, 12, 31).expect("valid"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub general: GeneralModel,
    pub violent: ViolentModel,
    pub noise: NoiseSpec,
    pub population: PopulationSpec,
    pub seed: u64,
    /// Make the first persons zero-history first offenders, one per integer
    /// age in `[age_min, age_max]`.
    pub force_candidates: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            general: GeneralModel {
                age: AgeSpline::published_continuous(ScoreKind::General),
                criminal_weights: [0.15, 0.08, 0.15, 0.1],
                age_first_weight: -0.015,
            },
            violent: ViolentModel {
                age: AgeSpline::published_continuous(ScoreKind::Violent),
                violence_step: StepFunction::new(vec![0.0, 0.6, 1.2, 1.8, 2.3, 2.7, 3.0, 3.2, 3.4, 3.55, 3.7])
                    .expect("valid"),
                noncompliance_weights: [0.2, 0.05, 0.1],
                age_first_weight: -0.02,
            },
            noise: NoiseSpec {
                sd: 0.15,
                symmetric: false,
            },
            population: PopulationSpec::default(),
            seed: 0,
            force_candidates: true,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {p} is not a probability")))
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {v} must be finite and nonnegative")))
    }
}

impl SyntheticSpec {
    /// The default spec with no noise.
    pub fn noiseless() -> Self {
        let mut s = Self::default();
        s.noise.sd = 0.0;
        s
    }

    pub fn age_spline(&self, kind: ScoreKind) -> &AgeSpline {
        match kind {
            ScoreKind::General => &self.general.age,
            ScoreKind::Violent => &self.violent.age,
        }
    }

    pub fn age_first_weight(&self, kind: ScoreKind) -> f64 {
        match kind {
            ScoreKind::General => self.general.age_first_weight,
            ScoreKind::Violent => self.violent.age_first_weight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.population;
        if p.age_min as f64 > p.age_max as f64 || (p.age_min as f64) < AGE_MIN || p.age_max as f64 > AGE_MAX {
            return Err(invalid(format!(
                "age range [{}, {}] must lie within [{AGE_MIN}, {AGE_MAX}]",
                p.age_min, p.age_max
            )));
        }
        for s in [&self.general.age, &self.violent.age] {
            AgeSpline::new(s.knots().to_vec(), s.slopes().to_vec(), s.intercepts().to_vec())?;
        }
        StepFunction::new(self.violent.violence_step.values().to_vec())?;
        for (name, w) in self
            .general
            .criminal_weights
            .iter()
            .map(|w| ("criminal weight", *w))
            .chain(self.violent.noncompliance_weights.iter().map(|w| ("noncompliance weight", *w)))
        {
            check_nonneg(name, w)?;
        }
        for w in [self.general.age_first_weight, self.violent.age_first_weight] {
            if !(w.is_finite() && w <= 0.0) {
                return Err(invalid(format!("age_first_weight = {w} must be finite and ≤ 0")));
            }
        }
        check_nonneg("noise sd", self.noise.sd)?;
        if !(p.age_shape > 0.0 && p.age_scale > 0.0 && p.age_shape.is_finite() && p.age_scale.is_finite()) {
            return Err(invalid("age_shape and age_scale must be positive"));
        }
        if p.races.is_empty() {
            return Err(invalid("race mix is empty"));
        }
        for r in &p.races {
            check_nonneg("race share", r.share)?;
            if !r.age_shift.is_finite() {
                return Err(invalid("age_shift must be finite"));
            }
        }
        if p.races.iter().map(|r| r.share).sum::<f64>() <= 0.0 {
            return Err(invalid("race shares sum to zero"));
        }
        for (name, v) in [
            ("female_share", p.female_share),
            ("first_arrest_share", p.first_arrest_share),
            ("violent_share", p.violent_share),
            ("violent_charge_prob", p.violent_charge_prob),
            ("other_violent_charge_prob", p.other_violent_charge_prob),
            ("probation_share", p.probation_share),
            ("revocation_share", p.revocation_share),
            ("jail30_share", p.jail30_share),
            ("prison_share", p.prison_share),
        ] {
            check_prob(name, v)?;
        }
        for (name, v) in [
            ("arrest_rate", p.arrest_rate),
            ("recid_rate", p.recid_rate),
            ("recid_age_decay", p.recid_age_decay),
            ("recid_history_weight", p.recid_history_weight),
        ] {
            check_nonneg(name, v)?;
        }
        if p.screening_end < p.screening_start {
            return Err(invalid("screening_end precedes screening_start"));
        }
        Ok(())
    }
}

/// The additive pieces of one row's noiseless score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueComponents {
    pub age_term: f64,
    pub age_first_term: f64,
    pub subscale_term: f64,
}

impl TrueComponents {
    pub fn total(&self) -> f64 {
        self.age_term + self.age_first_term + self.subscale_term
    }
}

/// The model's components for a row, or `None` when its subscales or age at
/// first arrest are missing.
pub fn true_components(spec: &SyntheticSpec, row: &ProfileRow) -> Option<TrueComponents> {
    let v = row.subscales.as_ref()?;
    let age_first = row.age_first?;
    let age = row.age as f64;
    let kind = row.score_kind;
    let subscale_term = match kind {
        ScoreKind::General => {
            let c = &v.criminal_involvement;
            let items = [c.n_arrests, c.n_jail30, c.n_prison, c.n_probation_sentences];
            dot(&spec.general.criminal_weights, &items)
        }
        ScoreKind::Violent => {
            let n = &v.noncompliance;
            let items = [n.on_probation_at_offense, n.n_charges_on_probation, n.n_probation_violations];
            let sum = v.violence_history.to_array().iter().sum();
            spec.violent.violence_step.eval(sum) + dot(&spec.violent.noncompliance_weights, &items)
        }
    };
    Some(TrueComponents {
        age_term: spec.age_spline(kind).eval_unchecked(age),
        age_first_term: spec.age_first_weight(kind) * (age_first as f64 - age),
        subscale_term,
    })
}

fn dot<const N: usize>(w: &[f64; N], items: &[u32; N]) -> f64 {
    w.iter().zip(items).map(|(w, &x)| w * x as f64).sum()
}

/// Noiseless score of a row under the spec.
pub fn true_score(spec: &SyntheticSpec, row: &ProfileRow) -> Option<f64> {
    true_components(spec, row).map(|c| c.total())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub assessment_id: String,
    pub person_id: String,
    pub score_kind: ScoreKind,
    pub age: u32,
    pub age_first: u32,
    pub age_term: f64,
    pub age_first_term: f64,
    pub subscale_term: f64,
    pub noise: f64,
    /// `true_score + noise`, exactly as written to the cohort.
    pub raw_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub raw: RawCohort,
    pub dataset: CohortDataset,
    /// One row per assessment, in dataset order.
    pub truth: Vec<TruthRow>,
}

struct Offense {
    statute: &'static str,
    degree: &'static str,
    description: &'static str,
    weight: f64,
}

const fn off(statute: &'static str, degree: &'static str, description: &'static str, weight: f64) -> Offense {
    Offense {
        statute,
        degree,
        description,
        weight,
    }
}

const NONVIOLENT: [Offense; 6] = [
    off("893.13", "(F3)", "Possession Of Cocaine", 3.0),
    off("316.193", "(M1)", "Driving Under The Influence", 2.0),
    off("812.014", "(F3)", "Grand Theft In The 3rd Degree", 2.0),
    off("322.34", "(M2)", "Driving License Suspended", 2.0),
    off("893.147", "(F3)", "Possession Of Drug Paraphernalia", 1.0),
    off("843.02", "(M1)", "Resist Officer Without Violence", 1.0),
];

const VIOLENT: [Offense; 8] = [
    off("784.03", "(M1)", "Battery", 4.0),
    off("784.021", "(F3)", "Aggravated Assault With Deadly Weapon", 2.0),
    off("784.045", "(F2)", "Aggravated Battery", 1.5),
    off("812.13", "(F2)", "Robbery", 1.0),
    off("790.01", "(F3)", "Carrying Concealed Firearm", 1.0),
    off("741.28", "(M1)", "Domestic Violence Battery", 0.5),
    off("794.011", "(F2)", "Sexual Battery", 0.2),
    off("782.04", "(F1)", "Murder", 0.1),
];

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &'a [Offense]) -> &'a Offense {
    let total: f64 = pool.iter().map(|o| o.weight).sum();
    let mut u = rng.random::<f64>() * total;
    for o in pool {
        if u < o.weight {
            return o;
        }
        u -= o.weight;
    }
    &pool[pool.len() - 1]
}

fn days_between(rng: &mut ChaCha8Rng, lo: NaiveDate, hi: NaiveDate) -> NaiveDate {
    let span = (hi - lo).num_days().max(0);
    lo + Duration::days(rng.random_range(0..=span))
}

fn birthday(dob: NaiveDate, age: u32) -> NaiveDate {
    dob.checked_add_months(Months::new(12 * age)).expect("date in range")
}

fn iso(d: NaiveDate) -> String {
    format!("{:04}-{:02}-{:02}", d.year(), d.month(), d.day())
}

struct Builder {
    raw: RawCohort,
}

impl Builder {
    fn charge(&mut self, person: &str, date: NaiveDate, o: &Offense) {
        let line = self.raw.charges.len() as u64 + 2;
        self.raw.charges.push(ChargeRow {
            line,
            person_id: person.to_string(),
            charge_date: iso(date),
            statute: o.statute.to_string(),
            degree: o.degree.to_string(),
            description: o.description.to_string(),
        });
    }

    fn event(&mut self, person: &str, date: NaiveDate, description: &str) {
        let line = self.raw.events.len() as u64 + 2;
        self.raw.events.push(EventRow {
            line,
            person_id: person.to_string(),
            event_date: iso(date),
            description: description.to_string(),
        });
    }
}

fn draw_age(rng: &mut ChaCha8Rng, p: &PopulationSpec, shift: f64) -> u32 {
    let gamma = Gamma::new(p.age_shape, p.age_scale).expect("validated");
    for _ in 0..1000 {
        let a = p.age_min as f64 + gamma.sample(rng) + shift;
        if a >= p.age_min as f64 && a < p.age_max as f64 + 1.0 {
            return a as u32;
        }
    }
    rng.random_range(p.age_min..=p.age_max)
}

fn draw_race(rng: &mut ChaCha8Rng, p: &PopulationSpec) -> RaceShare {
    let total: f64 = p.races.iter().map(|r| r.share).sum();
    let mut u = rng.random::<f64>() * total;
    for r in &p.races {
        if u < r.share {
            return *r;
        }
        u -= r.share;
    }
    *p.races.iter().rev().find(|r| r.share > 0.0).expect("validated")
}

/// Draws one person and their records. Returns the assessment rows (general,
/// violent) without scores.
fn person(b: &mut Builder, spec: &SyntheticSpec, index: usize, forced_age: Option<u32>) -> [AssessmentRow; 2] {
    let p = &spec.population;
    let mut rng = rng::stream(rng::derive_seed(spec.seed, streams::SYNTH), index as u64 + 1);
    let id = format!("P{:06}", index + 1);
    let race = draw_race(&mut rng, p);
    let female = rng.random::<f64>() < p.female_share;
    let age = forced_age.unwrap_or_else(|| draw_age(&mut rng, p, race.age_shift));

    let screening = days_between(&mut rng, p.screening_start, p.screening_end);
    let last_birthday = screening - Duration::days(rng.random_range(40..=325));
    let dob = last_birthday
        .checked_sub_months(Months::new(12 * age))
        .expect("date in range");
    debug_assert_eq!(records::age_at(dob, screening).ok(), Some(age));
    b.raw.persons.push(PersonRow {
        line: b.raw.persons.len() as u64 + 2,
        person_id: id.clone(),
        dob: iso(dob),
        sex: if female { "Female" } else { "Male" }.to_string(),
        race: race.race.as_str().to_string(),
    });

    let violent_prob = if rng.random::<f64>() < p.violent_share {
        p.violent_charge_prob
    } else {
        p.other_violent_charge_prob
    };
    let offense = |rng: &mut ChaCha8Rng| {
        if rng.random::<f64>() < violent_prob {
            pick(rng, &VIOLENT)
        } else {
            pick(rng, &NONVIOLENT)
        }
    };

    let history = forced_age.is_none() && age > 14 && rng.random::<f64>() >= p.first_arrest_share;
    let latest_prior = screening - Duration::days(60);
    let mut priors: Vec<NaiveDate> = Vec::new();
    if history {
        let span = (age - 14) as f64;
        let age_first = 14 + (span * rng.random::<f64>().powi(2)) as u32;
        let lo = birthday(dob, age_first);
        let hi = (birthday(dob, age_first + 1) - Duration::days(1)).min(latest_prior);
        let first = days_between(&mut rng, lo, hi);
        priors.push(first);
        let years = (latest_prior - first).num_days() as f64 / 365.25;
        let propensity = Gamma::new(1.5, 1.0 / 1.5).expect("valid").sample(&mut rng);
        let lambda = p.arrest_rate * years * propensity;
        let extra = if lambda > 0.0 {
            Poisson::new(lambda).expect("positive").sample(&mut rng) as usize
        } else {
            0
        };
        for _ in 0..extra.min(40) {
            priors.push(days_between(&mut rng, first, latest_prior));
        }
        priors.sort();
    }

    let mut felonies = 0u64;
    for &d in &priors {
        let o = offense(&mut rng);
        felonies += o.degree.starts_with("(F") as u64;
        b.charge(&id, d, o);
        if rng.random::<f64>() < p.probation_share {
            let on = d + Duration::days(rng.random_range(20..=90));
            b.event(&id, on, "File Order Of Probation");
            if rng.random::<f64>() < p.revocation_share {
                let at = on + Duration::days(rng.random_range(60..=500));
                b.event(&id, at, "File Order Of Revocation Of Probation");
            } else {
                let at = on + Duration::days(rng.random_range(180..=720));
                b.event(&id, at, "File Order Of Termination Of Probation");
            }
        }
    }
    let binomial = |rng: &mut ChaCha8Rng, n: u64, p: f64| Binomial::new(n, p).expect("validated").sample(rng);
    let jail30 = binomial(&mut rng, priors.len() as u64, p.jail30_share);
    let prison = binomial(&mut rng, felonies, p.prison_share);

    let offense_date = screening - Duration::days(rng.random_range(0..=10));
    let n_current = 1 + (rng.random::<f64>() < 0.35) as usize;
    for _ in 0..n_current {
        let o = offense(&mut rng);
        b.charge(&id, offense_date, o);
    }

    let future_end = p.screening_end + Duration::days(records::RECIDIVISM_HORIZON_DAYS + 180);
    let years = (future_end - screening).num_days() as f64 / 365.25;
    let rate = p.recid_rate
        * (-p.recid_age_decay * (age as f64 - 18.0)).exp()
        * (1.0 + p.recid_history_weight * priors.len().min(10) as f64);
    if rate * years > 0.0 {
        let k = Poisson::new(rate * years).expect("positive").sample(&mut rng) as usize;
        for _ in 0..k {
            let d = days_between(&mut rng, screening + Duration::days(1), future_end);
            let o = offense(&mut rng);
            b.charge(&id, d, o);
        }
    }

    let row = |n: usize, kind: ScoreKind| AssessmentRow {
        line: 0,
        assessment_id: format!("A{:07}", 2 * index + n),
        person_id: id.clone(),
        screening_date: iso(screening),
        score_kind: kind.as_str().to_string(),
        raw_score: "0".to_string(),
        decile_score: "1".to_string(),
        stage: "pretrial".to_string(),
        jail30: Some(format!("{jail30}")),
        prison: Some(format!("{prison}")),
    };
    [row(1, ScoreKind::General), row(2, ScoreKind::Violent)]
}

/// Deciles `1 + ⌊10·rank/n⌋` by ascending score within each kind, ties broken
/// by position, so every decile holds ⌊n/10⌋ or ⌈n/10⌉ rows.
pub fn empirical_deciles(scores: &[f64]) -> Vec<u8> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut out = vec![0u8; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = 1 + (10 * rank / n) as u8;
    }
    out
}

fn noise(rng: &mut ChaCha8Rng, spec: &NoiseSpec) -> f64 {
    if spec.sd == 0.0 {
        return 0.0;
    }
    let e = Normal::new(0.0, spec.sd).expect("validated").sample(rng);
    if spec.symmetric {
        e
    } else {
        e.abs()
    }
}

/// Generates `n` persons (two assessments each) from the spec.
pub fn generate(spec: &SyntheticSpec, n: usize) -> Result<SyntheticCohort> {
    spec.validate()?;
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let p = &spec.population;
    let forced = if spec.force_candidates {
        (p.age_max - p.age_min + 1) as usize
    } else {
        0
    };
    if forced > n {
        return Err(invalid(format!(
            "n = {n} cannot hold one candidate per age in [{}, {}]",
            p.age_min, p.age_max
        )));
    }

    let mut b = Builder { raw: RawCohort::default() };
    let mut assessments = Vec::with_capacity(2 * n);
    for i in 0..n {
        let age = (i < forced).then(|| p.age_min + i as u32);
        assessments.extend(person(&mut b, spec, i, age));
    }
    for (i, a) in assessments.iter_mut().enumerate() {
        a.line = i as u64 + 2;
    }
    b.raw.assessments = assessments;

    let config = IngestConfig::default();
    let draft = CohortDataset::ingest(&b.raw, &config)?;
    let profiles = build_profiles(&draft, &SubscaleConfig::default());

    let mut noise_rng = rng::stream(rng::derive_seed(spec.seed, streams::SYNTH), 0);
    let mut truth = Vec::with_capacity(profiles.len());
    for r in &profiles {
        let c = true_components(spec, r)
            .ok_or_else(|| invalid(format!("assessment {} has no computable history", r.assessment_id)))?;
        let e = noise(&mut noise_rng, &spec.noise);
        truth.push(TruthRow {
            assessment_id: r.assessment_id.clone(),
            person_id: r.person_id.clone(),
            score_kind: r.score_kind,
            age: r.age,
            age_first: r.age_first.expect("checked by true_components"),
            age_term: c.age_term,
            age_first_term: c.age_first_term,
            subscale_term: c.subscale_term,
            noise: e,
            raw_score: c.total() + e,
        });
    }

    let mut decile = alloc::collections::BTreeMap::new();
    for kind in [ScoreKind::General, ScoreKind::Violent] {
        let idx: Vec<usize> = (0..truth.len()).filter(|&i| truth[i].score_kind == kind).collect();
        let scores: Vec<f64> = idx.iter().map(|&i| truth[i].raw_score).collect();
        for (&i, d) in idx.iter().zip(empirical_deciles(&scores)) {
            decile.insert(truth[i].assessment_id.as_str(), (truth[i].raw_score, d));
        }
    }
    for a in &mut b.raw.assessments {
        let (raw, d) = decile[a.assessment_id.as_str()];
        a.raw_score = format!("{raw}");
        a.decile_score = format!("{d}");
    }
    let dataset = CohortDataset::ingest(&b.raw, &config)?;
    Ok(SyntheticCohort {
        raw: b.raw,
        dataset,
        truth,
    })
}

/// Makes `k` zero-history persons aged at least `age_min + shift` look `shift`
/// years younger by moving their date of birth; their scores still reflect
/// the true age. Returns the affected person ids.
pub fn inject_age_typos(cohort: &SyntheticCohort, k: usize, shift: u32, seed: u64) -> Result<(RawCohort, Vec<String>)> {
    let min_age = AGE_MIN as u32 + shift;
    let mut eligible: Vec<&str> = Vec::new();
    for t in &cohort.truth {
        let first_offender = t.age_first == t.age && t.subscale_term == 0.0;
        if t.score_kind == ScoreKind::General && first_offender && t.age >= min_age {
            let clean = cohort.dataset.charges_of(&t.person_id).iter().all(|c| {
                records::age_at(cohort.dataset.person(&t.person_id).expect("known").date_of_birth, c.charge_date)
                    .map_or(false, |a| a >= t.age)
            }) && cohort.dataset.events_of(&t.person_id).is_empty();
            if clean {
                eligible.push(&t.person_id);
            }
        }
    }
    if eligible.len() < k {
        return Err(invalid(format!("only {} persons are eligible for an age typo", eligible.len())));
    }
    let mut rng = rng::stream(seed, streams::SYNTH);
    let mut chosen: Vec<String> = rand::seq::index::sample(&mut rng, eligible.len(), k)
        .into_iter()
        .map(|i| eligible[i].to_string())
        .collect();
    chosen.sort();
    let mut raw = cohort.raw.clone();
    for p in &mut raw.persons {
        if chosen.binary_search(&p.person_id).is_ok() {
            let dob = NaiveDate::parse_from_str(&p.dob, "%Y-%m-%d").map_err(|_| invalid("generated dob"))?;
            p.dob = iso(birthday(dob, shift));
        }
    }
    Ok((raw, chosen))
}
