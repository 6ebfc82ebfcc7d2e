//! Capped integer components of the Criminal Involvement, History of
//! Violence and History of Noncompliance subscales.
//!
//! A charge counts as an arrest; several charges on one day are one arrest.
//! Every component looks only at events strictly before the current offense
//! date.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::records::{
    self, Assessment, Charge, CohortDataset, ProbationEvent, ProbationKind, T_OFF_DAYS, T_ON_DAYS,
};
use crate::{Error, Result};

pub const DEFAULT_STATUTE_TABLE: &str = include_str!("../data/statute_classes.csv");

pub const FAMILY_VIOLENCE_STATUTE: &str = "741.28";

/// Flag set produced by [`classify_statute`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StatuteClass(u16);

impl StatuteClass {
    pub const VIOLENT_FELONY_PROPERTY: Self = Self(1 << 0);
    pub const MURDER_MANSLAUGHTER: Self = Self(1 << 1);
    pub const FELONY_ASSAULT: Self = Self(1 << 2);
    pub const MISDEMEANOR_ASSAULT: Self = Self(1 << 3);
    pub const FAMILY_VIOLENCE: Self = Self(1 << 4);
    pub const SEX_OFFENSE: Self = Self(1 << 5);
    pub const WEAPONS: Self = Self(1 << 6);
    pub const FELONY: Self = Self(1 << 7);
    pub const MISDEMEANOR: Self = Self(1 << 8);
    pub const JUVENILE_FELONY_ELIGIBLE: Self = Self(1 << 9);
    pub const VIOLENT: Self = Self(1 << 10);

    const NAMES: [(Self, &'static str); 11] = [
        (Self::VIOLENT_FELONY_PROPERTY, "violent_felony_property"),
        (Self::MURDER_MANSLAUGHTER, "murder_manslaughter"),
        (Self::FELONY_ASSAULT, "felony_assault"),
        (Self::MISDEMEANOR_ASSAULT, "misdemeanor_assault"),
        (Self::FAMILY_VIOLENCE, "family_violence"),
        (Self::SEX_OFFENSE, "sex_offense"),
        (Self::WEAPONS, "weapons"),
        (Self::FELONY, "felony"),
        (Self::MISDEMEANOR, "misdemeanor"),
        (Self::JUVENILE_FELONY_ELIGIBLE, "juvenile_felony_eligible"),
        (Self::VIOLENT, "violent"),
    ];

    pub const fn empty() -> Self {
        Self(0)
    }

    pub const fn contains(self, other: Self) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn insert(&mut self, other: Self) {
        self.0 |= other.0;
    }

    pub const fn union(self, other: Self) -> Self {
        Self(self.0 | other.0)
    }

    pub fn names(self) -> impl Iterator<Item = &'static str> {
        Self::NAMES
            .into_iter()
            .filter(move |(f, _)| self.contains(*f))
            .map(|(_, n)| n)
    }
}

impl fmt::Display for StatuteClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        f.write_str("{")?;
        for n in self.names() {
            if !first {
                f.write_str(", ")?;
            }
            f.write_str(n)?;
            first = false;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tokens {
    murder: bool,
    assault: bool,
    sex_offense: bool,
    weapons: bool,
    property: bool,
    violent: bool,
    family_violence: bool,
    juvenile_felony_eligible: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    prefix: String,
    tokens: Tokens,
}

/// Statute prefix → offense tokens, matched by longest prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatuteTable {
    entries: Vec<Entry>,
}

impl Default for StatuteTable {
    fn default() -> Self {
        Self::parse(DEFAULT_STATUTE_TABLE).expect("shipped statute table parses")
    }
}

impl StatuteTable {
    /// Parses `prefix,flags` lines, flags separated by spaces or `|`. Blank
    /// lines, `#` comments and a `prefix,flags` header are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.eq_ignore_ascii_case("prefix,flags") {
                continue;
            }
            let malformed = |message: String| Error::Malformed {
                file: "statute_classes.csv".to_string(),
                line: i as u64 + 1,
                message,
            };
            let (prefix, flags) = line
                .split_once(',')
                .ok_or_else(|| malformed("expected prefix,flags".to_string()))?;
            let prefix = prefix.trim();
            if prefix.is_empty() {
                return Err(malformed("empty prefix".to_string()));
            }
            let mut t = Tokens::default();
            for tok in flags.split([' ', '|', ';']).filter(|s| !s.is_empty()) {
                match tok {
                    "murder" => t.murder = true,
                    "assault" => t.assault = true,
                    "sex_offense" => t.sex_offense = true,
                    "weapons" => t.weapons = true,
                    "property" => t.property = true,
                    "violent" => t.violent = true,
                    "family_violence" => t.family_violence = true,
                    "juvenile_felony_eligible" => t.juvenile_felony_eligible = true,
                    other => return Err(malformed(format!("unknown flag {other:?}"))),
                }
            }
            entries.push(Entry {
                prefix: prefix.to_string(),
                tokens: t,
            });
        }
        entries.sort_by(|a, b| b.prefix.len().cmp(&a.prefix.len()).then(a.prefix.cmp(&b.prefix)));
        Ok(Self { entries })
    }

    fn lookup(&self, statute: &str) -> Option<Tokens> {
        let s = statute.trim();
        self.entries
            .iter()
            .find(|e| {
                s.starts_with(e.prefix.as_str())
                    && (e.prefix.contains('.')
                        || s.len() == e.prefix.len()
                        || s.as_bytes()[e.prefix.len()] == b'.')
            })
            .map(|e| e.tokens)
    }

    /// Whether the statute has an entry; unknown statutes classify by degree only.
    pub fn is_known(&self, statute: &str) -> bool {
        self.lookup(statute).is_some()
    }
}

/// Deterministic flags for one charge. The statute 741.28 is always family
/// violence; felony and misdemeanor come from the degree's leading letter.
pub fn classify_statute(table: &StatuteTable, statute: &str, degree: &str) -> StatuteClass {
    let d = degree.trim().trim_start_matches('(');
    let felony = d.starts_with('F');
    let misdemeanor = d.starts_with('M');
    let mut t = table.lookup(statute).unwrap_or_default();
    if statute.trim() == FAMILY_VIOLENCE_STATUTE {
        t.family_violence = true;
        t.violent = true;
    }
    let mut c = StatuteClass::empty();
    let mut set = |on: bool, f: StatuteClass| {
        if on {
            c.insert(f)
        }
    };
    set(felony, StatuteClass::FELONY);
    set(misdemeanor, StatuteClass::MISDEMEANOR);
    set(t.murder, StatuteClass::MURDER_MANSLAUGHTER);
    set(t.sex_offense, StatuteClass::SEX_OFFENSE);
    set(t.weapons, StatuteClass::WEAPONS);
    set(t.family_violence, StatuteClass::FAMILY_VIOLENCE);
    set(t.violent, StatuteClass::VIOLENT);
    set(t.juvenile_felony_eligible, StatuteClass::JUVENILE_FELONY_ELIGIBLE);
    let plain_assault = t.assault && !t.murder && !t.sex_offense && !t.family_violence;
    set(plain_assault && felony, StatuteClass::FELONY_ASSAULT);
    set(plain_assault && misdemeanor, StatuteClass::MISDEMEANOR_ASSAULT);
    set(felony && t.property && t.violent, StatuteClass::VIOLENT_FELONY_PROPERTY);
    c
}

pub fn cap(value: u32, max: u32) -> u32 {
    value.min(max)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriminalInvolvement {
    /// Uncapped.
    pub n_arrests: u32,
    pub n_jail30: u32,
    pub n_prison: u32,
    pub n_probation_sentences: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolenceHistory {
    pub juvenile_felony: u32,
    pub violent_felony_property: u32,
    pub murder_manslaughter: u32,
    pub felony_assault: u32,
    pub misdemeanor_assault: u32,
    pub family_violence: u32,
    pub sex_offense: u32,
    pub weapons: u32,
}

impl ViolenceHistory {
    pub const CAPS: [u32; 8] = [2, 5, 3, 3, 3, 3, 3, 3];
    pub const NAMES: [&'static str; 8] = [
        "juvenile_felony",
        "violent_felony_property",
        "murder_manslaughter",
        "felony_assault",
        "misdemeanor_assault",
        "family_violence",
        "sex_offense",
        "weapons",
    ];

    pub fn to_array(&self) -> [u32; 8] {
        [
            self.juvenile_felony,
            self.violent_felony_property,
            self.murder_manslaughter,
            self.felony_assault,
            self.misdemeanor_assault,
            self.family_violence,
            self.sex_offense,
            self.weapons,
        ]
    }

    pub fn from_array(v: [u32; 8]) -> Self {
        Self {
            juvenile_felony: v[0],
            violent_felony_property: v[1],
            murder_manslaughter: v[2],
            felony_assault: v[3],
            misdemeanor_assault: v[4],
            family_violence: v[5],
            sex_offense: v[6],
            weapons: v[7],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Noncompliance {
    pub on_probation_at_offense: u32,
    pub n_charges_on_probation: u32,
    pub n_probation_violations: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscaleVector {
    pub criminal_involvement: CriminalInvolvement,
    pub violence_history: ViolenceHistory,
    pub noncompliance: Noncompliance,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscaleSums {
    pub criminal_involvement_sum: u32,
    pub violence_history_sum: u32,
    pub noncompliance_sum: u32,
}

pub fn sums(v: &SubscaleVector) -> SubscaleSums {
    let c = &v.criminal_involvement;
    let n = &v.noncompliance;
    SubscaleSums {
        criminal_involvement_sum: c.n_arrests + c.n_jail30 + c.n_prison + c.n_probation_sentences,
        violence_history_sum: v.violence_history.to_array().iter().sum(),
        noncompliance_sum: n.on_probation_at_offense + n.n_charges_on_probation + n.n_probation_violations,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubscaleConfig {
    pub t_on: i64,
    pub t_off: i64,
    pub statutes: StatuteTable,
}

impl Default for SubscaleConfig {
    fn default() -> Self {
        Self {
            t_on: T_ON_DAYS,
            t_off: T_OFF_DAYS,
            statutes: StatuteTable::default(),
        }
    }
}

/// Everything the component counts depend on, for one assessment.
#[derive(Debug, Clone, Copy)]
pub struct History<'a> {
    pub date_of_birth: NaiveDate,
    pub offense_date: NaiveDate,
    /// The person's charges, any order, any dates.
    pub charges: &'a [Charge],
    /// The person's probation events sorted by date, including later ones.
    pub events: &'a [ProbationEvent],
    pub jail30: u32,
    pub prison: u32,
}

/// Counts distinct dates before the offense date carrying a charge that
/// satisfies `pred`.
fn arrest_dates(h: &History<'_>, pred: impl Fn(&Charge) -> bool) -> BTreeSet<NaiveDate> {
    h.charges
        .iter()
        .filter(|c| c.charge_date < h.offense_date && pred(c))
        .map(|c| c.charge_date)
        .collect()
}

pub fn compute_from_history(h: &History<'_>, config: &SubscaleConfig) -> SubscaleVector {
    let class = |c: &Charge| classify_statute(&config.statutes, &c.statute, &c.degree);
    let count = |f: StatuteClass| arrest_dates(h, |c| class(c).contains(f)).len() as u32;
    let arrests = arrest_dates(h, |_| true);
    let prior_events = h.events.iter().filter(|e| e.event_date < h.offense_date);
    let n_on = prior_events.clone().filter(|e| e.kind == ProbationKind::On).count() as u32;
    let n_rev = prior_events.filter(|e| e.kind == ProbationKind::Revocation).count() as u32;
    let on_prob = |d| records::probation_status_at(h.events, d, config.t_on, config.t_off);
    let juvenile = arrest_dates(h, |c| {
        let k = class(c);
        (k.contains(StatuteClass::FELONY) || k.contains(StatuteClass::JUVENILE_FELONY_ELIGIBLE))
            && records::is_juvenile(h.date_of_birth, c.charge_date)
    })
    .len() as u32;
    let raw = [
        juvenile,
        count(StatuteClass::VIOLENT_FELONY_PROPERTY),
        count(StatuteClass::MURDER_MANSLAUGHTER),
        count(StatuteClass::FELONY_ASSAULT),
        count(StatuteClass::MISDEMEANOR_ASSAULT),
        count(StatuteClass::FAMILY_VIOLENCE),
        count(StatuteClass::SEX_OFFENSE),
        count(StatuteClass::WEAPONS),
    ];
    let mut capped = [0u32; 8];
    for i in 0..8 {
        capped[i] = cap(raw[i], ViolenceHistory::CAPS[i]);
    }
    SubscaleVector {
        criminal_involvement: CriminalInvolvement {
            n_arrests: arrests.len() as u32,
            n_jail30: cap(h.jail30, 5),
            n_prison: cap(h.prison, 5),
            n_probation_sentences: cap(n_on, 5),
        },
        violence_history: ViolenceHistory::from_array(capped),
        noncompliance: Noncompliance {
            on_probation_at_offense: on_prob(h.offense_date) as u32,
            n_charges_on_probation: cap(arrests.iter().filter(|&&d| on_prob(d)).count() as u32, 5),
            n_probation_violations: cap(n_rev, 5),
        },
    }
}

/// Components for one assessment, or `None` when its current offense is
/// missing (the row is not computable and must be excluded, not zeroed).
pub fn compute_subscales(
    dataset: &CohortDataset,
    assessment: &Assessment,
    config: &SubscaleConfig,
) -> Option<SubscaleVector> {
    let person = dataset.person(&assessment.person_id)?;
    let charges = dataset.charges_of(&assessment.person_id);
    let offense = records::resolve_current_offense(charges, assessment.screening_date);
    let h = History {
        date_of_birth: person.date_of_birth,
        offense_date: offense.offense_date?,
        charges,
        events: dataset.events_of(&assessment.person_id),
        jail30: assessment.jail30.unwrap_or(0),
        prison: assessment.prison.unwrap_or(0),
    };
    Some(compute_from_history(&h, config))
}
