//! Group-wise confusion rates, the category logistic regression, and
//! descriptive age curves.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::ml::linear;
use crate::profile::ProfileRow;
use crate::records::{Race, ScoreKind, Sex};
use crate::rng;
use crate::{Error, Result};

pub const DEFAULT_AGE_CUTOFF: u32 = 24;
pub const DEFAULT_DECILE_CUT: u8 = 4;
pub const DEFAULT_FAIRNESS_FOLDS: usize = 10;
pub const IRLS_TOL: f64 = 1e-8;
pub const IRLS_MAX_ITER: usize = 100;

/// Predicts a new charge within two years iff `age <= cutoff`.
pub fn age_model_predict(age: u32, cutoff: u32) -> bool {
    age <= cutoff
}

/// Medium or high risk iff `decile > cut`.
pub fn decile_to_prediction(decile: u8, cut: u8) -> bool {
    decile > cut
}

/// A nonnegative fraction kept as integer counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    /// `None` when the denominator is 0.
    pub fn new(num: u64, den: u64) -> Option<Self> {
        (den > 0).then_some(Self { num, den })
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Exact test of `self + other == 1`.
    pub fn complements(self, other: Ratio) -> bool {
        self.num as u128 * other.den as u128 + other.num as u128 * self.den as u128 == self.den as u128 * other.den as u128
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Counts {
    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn merge(&mut self, o: &Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Rates for one group within one fold (`fold = None` pools all folds).
/// A rate is `None` when its denominator is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionRates {
    pub group: String,
    pub fold: Option<usize>,
    pub counts: Counts,
    pub tpr: Option<Ratio>,
    pub fpr: Option<Ratio>,
    pub tnr: Option<Ratio>,
    pub fnr: Option<Ratio>,
}

impl ConfusionRates {
    pub fn from_counts(group: String, fold: Option<usize>, c: Counts) -> Self {
        let pos = c.tp + c.fn_;
        let neg = c.fp + c.tn;
        Self {
            group,
            fold,
            counts: c,
            tpr: Ratio::new(c.tp, pos),
            fpr: Ratio::new(c.fp, neg),
            tnr: Ratio::new(c.tn, neg),
            fnr: Ratio::new(c.fn_, pos),
        }
    }

    /// `tpr + fnr = 1` and `fpr + tnr = 1` wherever defined.
    pub fn identities_hold(&self) -> bool {
        let ok = |a: Option<Ratio>, b: Option<Ratio>| match (a, b) {
            (Some(a), Some(b)) => a.complements(b),
            (None, None) => true,
            _ => false,
        };
        ok(self.tpr, self.fnr) && ok(self.fpr, self.tnr)
    }
}

/// Seeded fold per row: a shuffled order dealt round-robin.
pub fn fairness_folds(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, rng::streams::FAIRNESS_FOLDS));
    let mut fold = vec![0; n];
    for (j, &i) in order.iter().enumerate() {
        fold[i] = j % k.max(1);
    }
    fold
}

/// Per group (sorted), one entry per fold followed by the pooled entry.
pub fn group_confusion_rates<G: AsRef<str>>(
    predictions: &[bool],
    labels: &[bool],
    groups: &[G],
    n_folds: usize,
    seed: u64,
) -> Result<Vec<ConfusionRates>> {
    if predictions.len() != labels.len() || labels.len() != groups.len() {
        return Err(Error::Invalid("predictions, labels and groups differ in length".into()));
    }
    if n_folds == 0 {
        return Err(Error::Invalid("at least one fold is required".into()));
    }
    let fold = fairness_folds(labels.len(), n_folds, seed);
    let mut cells: BTreeMap<&str, Vec<Counts>> = BTreeMap::new();
    for i in 0..labels.len() {
        let e = cells.entry(groups[i].as_ref()).or_insert_with(|| vec![Counts::default(); n_folds]);
        e[fold[i]].add(predictions[i], labels[i]);
    }
    let mut out = Vec::new();
    for (g, per_fold) in cells {
        let mut total = Counts::default();
        for (f, c) in per_fold.iter().enumerate() {
            total.merge(c);
            out.push(ConfusionRates::from_counts(g.to_string(), Some(f), *c));
        }
        out.push(ConfusionRates::from_counts(g.to_string(), None, total));
    }
    Ok(out)
}

/// How binary predictions are made from a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum RiskRule {
    Age { cutoff: u32 },
    Decile { cut: u8 },
}

impl RiskRule {
    pub fn predict(&self, r: &ProfileRow) -> bool {
        match *self {
            RiskRule::Age { cutoff } => age_model_predict(r.age, cutoff),
            RiskRule::Decile { cut } => decile_to_prediction(r.decile_score, cut),
        }
    }
}

/// Rates by race for observable general-score rows against two-year general
/// recidivism.
pub fn race_rates(rows: &[ProfileRow], rule: RiskRule, n_folds: usize, seed: u64) -> Result<Vec<ConfusionRates>> {
    let use_rows: Vec<&ProfileRow> = rows
        .iter()
        .filter(|r| r.score_kind == ScoreKind::General && r.recidivism.observable)
        .collect();
    let pred: Vec<bool> = use_rows.iter().map(|r| rule.predict(r)).collect();
    let lab: Vec<bool> = use_rows.iter().map(|r| r.recidivism.general).collect();
    let grp: Vec<&str> = use_rows.iter().map(|r| r.race.as_str()).collect();
    group_confusion_rates(&pred, &lab, &grp, n_folds, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub n: usize,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub log_likelihood: f64,
}

impl LogisticFit {
    pub fn coefficient(&self, name: &str) -> Option<(f64, f64)> {
        let j = self.names.iter().position(|n| n == name)?;
        Some((self.coefficients[j], self.standard_errors[j]))
    }
}

/// Maximum-likelihood logistic regression (no penalty) with an explicit
/// design. Separation is reported with the name of the non-intercept
/// feature whose coefficient diverged most.
pub fn fit_logistic(names: Vec<String>, x: &Matrix, y: &[f64]) -> Result<LogisticFit> {
    let fit = linear::irls(x, y, 0.0, IRLS_TOL, IRLS_MAX_ITER)?;
    if fit.separated {
        let j = (0..fit.beta.len())
            .filter(|&j| names[j] != "intercept")
            .max_by(|&a, &b| fit.beta[a].abs().total_cmp(&fit.beta[b].abs()))
            .unwrap_or(0);
        return Err(Error::Separation {
            feature: names[j].clone(),
        });
    }
    let se: Vec<f64> = (0..fit.beta.len()).map(|j| fit.covariance[(j, j)].max(0.0).sqrt()).collect();
    if se.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Degenerate("information matrix is singular".into()));
    }
    Ok(LogisticFit {
        names,
        coefficients: fit.beta,
        standard_errors: se,
        n: x.rows(),
        iterations: fit.iterations,
        gradient_norm: fit.gradient_norm,
        log_likelihood: fit.log_likelihood,
    })
}

pub const PROPUBLICA_FEATURES: [&str; 12] = [
    "intercept",
    "female",
    "age_over_45",
    "age_under_25",
    "black",
    "asian",
    "hispanic",
    "native_american",
    "other",
    "priors_count",
    "misdemeanor",
    "two_year_recid",
];

/// Design row for the category regression, or `None` when the row lacks
/// what it needs.
pub fn propublica_row(r: &ProfileRow) -> Option<[f64; 12]> {
    let v = r.subscales.as_ref()?;
    let cur = r.current?;
    let b = |c: bool| if c { 1.0 } else { 0.0 };
    Some([
        1.0,
        b(r.sex == Sex::Female),
        b(r.age > 45),
        b(r.age < 25),
        b(r.race == Race::AfricanAmerican),
        b(r.race == Race::Asian),
        b(r.race == Race::Hispanic),
        b(r.race == Race::NativeAmerican),
        b(r.race == Race::Other),
        v.criminal_involvement.n_arrests as f64,
        b(cur.misdemeanor()),
        b(r.recidivism.general),
    ])
}

/// Medium/high (decile > `cut`) vs low on the general score, over rows with
/// two years of follow-up and a resolvable current offense.
pub fn fit_propublica_logistic(rows: &[ProfileRow], cut: u8) -> Result<LogisticFit> {
    let mut data = Vec::new();
    let mut y = Vec::new();
    for r in rows.iter().filter(|r| r.score_kind == ScoreKind::General && r.recidivism.observable) {
        if let Some(d) = propublica_row(r) {
            data.extend_from_slice(&d);
            y.push(if decile_to_prediction(r.decile_score, cut) { 1.0 } else { 0.0 });
        }
    }
    if y.is_empty() {
        return Err(Error::EmptyCohort("observable general assessments"));
    }
    let x = Matrix::from_rows(y.len(), PROPUBLICA_FEATURES.len(), data);
    fit_logistic(PROPUBLICA_FEATURES.iter().map(|s| s.to_string()).collect(), &x, &y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeProportion {
    pub age: u32,
    /// Rows within the window.
    pub n: usize,
    pub proportion: f64,
}

/// Share of observable rows of `kind` with a new charge of that kind within
/// two years, over ages `a − half_width ..= a + half_width`, for every
/// integer age between the youngest and oldest row.
pub fn recid_probability_vs_age(rows: &[ProfileRow], kind: ScoreKind, half_width: u32) -> Vec<AgeProportion> {
    let mut by_age: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.score_kind == kind && r.recidivism.observable) {
        let hit = match kind {
            ScoreKind::General => r.recidivism.general,
            ScoreKind::Violent => r.recidivism.violent,
        };
        let e = by_age.entry(r.age).or_insert((0, 0));
        e.0 += 1;
        e.1 += hit as usize;
    }
    let (Some(&lo), Some(&hi)) = (by_age.keys().next(), by_age.keys().next_back()) else {
        return Vec::new();
    };
    (lo..=hi)
        .filter_map(|a| {
            let (n, k) = by_age
                .range(a.saturating_sub(half_width)..=a.saturating_add(half_width))
                .fold((0, 0), |acc, (_, v)| (acc.0 + v.0, acc.1 + v.1));
            (n > 0).then(|| AgeProportion {
                age: a,
                n,
                proportion: k as f64 / n as f64,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeDistribution {
    pub race: Race,
    pub n: usize,
    pub median: f64,
    /// (age, share of the group's rows); shares sum to 1.
    pub histogram: Vec<(u32, f64)>,
}

/// Median of sorted values; the mean of the middle pair for even counts.
pub fn median_sorted(v: &[u32]) -> Option<f64> {
    let n = v.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(v[n / 2] as f64),
        _ => Some((v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0),
    }
}

/// Screening-age histogram and median per race, over rows of `kind`.
pub fn age_distribution_by_race(rows: &[ProfileRow], kind: ScoreKind) -> Vec<AgeDistribution> {
    let mut ages: BTreeMap<Race, Vec<u32>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.score_kind == kind) {
        ages.entry(r.race).or_default().push(r.age);
    }
    ages.into_iter()
        .map(|(race, mut a)| {
            a.sort_unstable();
            let n = a.len();
            let mut hist: BTreeMap<u32, usize> = BTreeMap::new();
            for &x in &a {
                *hist.entry(x).or_insert(0) += 1;
            }
            AgeDistribution {
                race,
                n,
                median: median_sorted(&a).expect("nonempty group"),
                histogram: hist.into_iter().map(|(age, c)| (age, c as f64 / n as f64)).collect(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn age_rule_boundaries() {
        assert!(age_model_predict(24, DEFAULT_AGE_CUTOFF));
        assert!(!age_model_predict(25, DEFAULT_AGE_CUTOFF));
        assert!(age_model_predict(18, DEFAULT_AGE_CUTOFF));
    }

    #[test]
    fn decile_rule_boundaries() {
        assert!(!decile_to_prediction(4, DEFAULT_DECILE_CUT));
        assert!(decile_to_prediction(5, DEFAULT_DECILE_CUT));
        assert!(decile_to_prediction(10, DEFAULT_DECILE_CUT));
    }

    #[test]
    fn four_row_fixture_matches_hand_counts() {
        // Group a: (pred, label) = (T,T), (T,F); group b: (F,T), (F,F).
        let pred = [true, true, false, false];
        let lab = [true, false, true, false];
        let grp = ["a", "a", "b", "b"];
        let rates = group_confusion_rates(&pred, &lab, &grp, 1, 0).unwrap();
        let a = rates.iter().find(|r| r.group == "a" && r.fold.is_none()).unwrap();
        assert_eq!((a.counts.tp, a.counts.fp, a.counts.tn, a.counts.fn_), (1, 1, 0, 0));
        assert_eq!(a.tpr.unwrap().value(), 1.0);
        assert_eq!(a.fpr.unwrap().value(), 1.0);
        let b = rates.iter().find(|r| r.group == "b" && r.fold.is_none()).unwrap();
        assert_eq!((b.counts.tp, b.counts.fp, b.counts.tn, b.counts.fn_), (0, 0, 1, 1));
        assert_eq!(b.fnr.unwrap().value(), 1.0);
        assert_eq!(b.tnr.unwrap().value(), 1.0);
    }

    #[test]
    fn empty_denominators_are_undefined() {
        let r = ConfusionRates::from_counts("g".into(), Some(0), Counts { tp: 2, fp: 0, tn: 0, fn_: 0 });
        assert!(r.fpr.is_none() && r.tnr.is_none());
        assert!(r.identities_hold());
    }

    #[test]
    fn two_separated_points() {
        let x = Matrix::from_rows(2, 2, vec![1.0, 0.0, 1.0, 1.0]);
        let e = fit_logistic(vec!["intercept".into(), "z".into()], &x, &[0.0, 1.0]).unwrap_err();
        assert_eq!(e, Error::Separation { feature: "z".into() });
    }

    #[test]
    fn independent_feature_has_small_z() {
        // Outcome balanced within each level of z.
        let mut data = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            data.extend_from_slice(&[1.0, (i % 2) as f64]);
            y.push(((i / 2) % 2) as f64);
        }
        let f = fit_logistic(vec!["intercept".into(), "z".into()], &Matrix::from_rows(40, 2, data), &y).unwrap();
        let (b, se) = f.coefficient("z").unwrap();
        assert!((b / se).abs() < 2.0);
        assert!(f.gradient_norm < IRLS_TOL);
    }

    #[test]
    fn medians() {
        assert_eq!(median_sorted(&[30]), Some(30.0));
        assert_eq!(median_sorted(&[20, 27, 27, 40]), Some(27.0));
        assert_eq!(median_sorted(&[20, 27]), Some(23.5));
    }
}
