//! Remainders after subtracting reconstructed components, and paired
//! ablation fits that test whether a feature still carries signal.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::lowerbound::{AgeSpline, StepFunction};
use crate::ml::{cross_validate, folds, train_predict, CvResult, Family, Hyper, RegressorSpec, Task};
use crate::profile::ProfileRow;
use crate::records::{Race, ScoreKind};
use crate::subscales::ViolenceHistory;
use crate::{Error, Result};

/// A fitted additive piece of the raw score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "component", rename_all = "snake_case")]
pub enum Component {
    /// Evaluated at the screening age.
    Age { spline: AgeSpline },
    /// Evaluated at the capped violence-history sum.
    ViolenceHistory { step: StepFunction },
}

impl Component {
    pub fn eval(&self, row: &ProfileRow) -> Result<f64> {
        match self {
            Component::Age { spline } => spline.evaluate(row.age as f64),
            Component::ViolenceHistory { step } => {
                let sums = row.sums.as_ref().ok_or(Error::NotFitted("violence history sum"))?;
                Ok(step.eval(sums.violence_history_sum))
            }
        }
    }
}

/// `raw_score − Σ component(row)`.
pub fn compute_remainder(row: &ProfileRow, components: &[Component]) -> Result<f64> {
    let mut r = row.raw_score;
    for c in components {
        r -= c.eval(row)?;
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Remainder,
    Raw,
    /// Two-year recidivism of the score's own kind, as a 0/1 label.
    Recidivism,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Age,
    Race,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Age => "age",
            Axis::Race => "race",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureOptions {
    pub age: bool,
    pub race: bool,
    pub current_offense: bool,
}

/// Race dummies, with Caucasian as the reference level.
pub const RACE_DUMMIES: [Race; 5] = [
    Race::AfricanAmerican,
    Race::Hispanic,
    Race::Asian,
    Race::NativeAmerican,
    Race::Other,
];

/// Rows are the usable assessments; `rows[i]` indexes the input slice.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub x: Matrix,
    pub rows: Vec<usize>,
    /// Rows of the requested kind dropped for missing subscales, age at first
    /// arrest or current offense.
    pub excluded: usize,
}

fn usable(r: &ProfileRow, opts: &FeatureOptions) -> bool {
    r.subscales.is_some() && r.age_first.is_some() && (!opts.current_offense || r.current.is_some())
}

/// Criminal involvement items for the general score; violence history and
/// noncompliance items for the violent score; age at first arrest; then the
/// optional blocks.
pub fn feature_names(kind: ScoreKind, opts: &FeatureOptions) -> Vec<String> {
    let mut names: Vec<String> = match kind {
        ScoreKind::General => ["n_arrests", "n_jail30", "n_prison", "n_probation_sentences"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        ScoreKind::Violent => ViolenceHistory::NAMES
            .iter()
            .chain(["on_probation_at_offense", "n_charges_on_probation", "n_probation_violations"].iter())
            .map(|s| s.to_string())
            .collect(),
    };
    names.push("age_first".into());
    if opts.age {
        names.push("age".into());
    }
    if opts.race {
        names.extend(RACE_DUMMIES.iter().map(|r| format!("race_{}", r.as_str())));
    }
    if opts.current_offense {
        names.extend(["current_n_charges", "current_felony", "current_violent"].iter().map(|s| s.to_string()));
    }
    names
}

fn feature_row(r: &ProfileRow, kind: ScoreKind, opts: &FeatureOptions, out: &mut Vec<f64>) {
    let v = r.subscales.as_ref().expect("usable row");
    match kind {
        ScoreKind::General => {
            let c = &v.criminal_involvement;
            out.extend([c.n_arrests, c.n_jail30, c.n_prison, c.n_probation_sentences].map(f64::from));
        }
        ScoreKind::Violent => {
            out.extend(v.violence_history.to_array().map(f64::from));
            let n = &v.noncompliance;
            out.extend([n.on_probation_at_offense, n.n_charges_on_probation, n.n_probation_violations].map(f64::from));
        }
    }
    out.push(r.age_first.expect("usable row") as f64);
    if opts.age {
        out.push(r.age as f64);
    }
    if opts.race {
        out.extend(RACE_DUMMIES.iter().map(|&g| if r.race == g { 1.0 } else { 0.0 }));
    }
    if opts.current_offense {
        let c = r.current.expect("usable row");
        out.extend([c.n_charges as f64, c.felony as u8 as f64, c.violent as u8 as f64]);
    }
}

fn build_matrix(rows: &[ProfileRow], idx: &[usize], kind: ScoreKind, opts: &FeatureOptions) -> Matrix {
    let names = feature_names(kind, opts);
    let mut data = Vec::with_capacity(idx.len() * names.len());
    for &i in idx {
        feature_row(&rows[i], kind, opts, &mut data);
    }
    Matrix::from_rows(idx.len(), names.len(), data)
}

/// Features for the rows of `kind`.
pub fn feature_matrix(rows: &[ProfileRow], kind: ScoreKind, opts: &FeatureOptions) -> FeatureMatrix {
    let of_kind: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].score_kind == kind).collect();
    let idx: Vec<usize> = of_kind.iter().copied().filter(|&i| usable(&rows[i], opts)).collect();
    FeatureMatrix {
        names: feature_names(kind, opts),
        x: build_matrix(rows, &idx, kind, opts),
        excluded: of_kind.len() - idx.len(),
        rows: idx,
    }
}

/// Folds, seed and learners shared by every fit in a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub folds: usize,
    pub seed: u64,
    pub specs: Vec<RegressorSpec>,
}

impl AblationConfig {
    /// All four families with their default grids.
    pub fn new(seed: u64) -> Self {
        Self {
            folds: 5,
            seed,
            specs: Family::ALL.iter().map(|&f| RegressorSpec::new(f, seed)).collect(),
        }
    }

    pub fn only(mut self, family: Family) -> Self {
        self.specs.retain(|s| s.family == family);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub family: Family,
    /// `with_age`, `without_race`, ...
    pub feature_set: String,
    /// `rmse` or `misclassification`.
    pub metric: String,
    pub value: f64,
    pub fold_values: Vec<f64>,
    pub chosen: Hyper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub score_kind: ScoreKind,
    pub target: Target,
    pub axis: Axis,
    pub n: usize,
    pub excluded: usize,
    pub features_with: Vec<String>,
    pub features_without: Vec<String>,
    pub config: AblationConfig,
    pub entries: Vec<AblationEntry>,
}

impl AblationResult {
    pub fn get(&self, family: Family, with: bool) -> Option<&AblationEntry> {
        let set = feature_set_name(self.axis, with);
        self.entries.iter().find(|e| e.family == family && e.feature_set == set)
    }

    /// `with − without` per family.
    pub fn deltas(&self) -> Vec<(Family, f64)> {
        self.config
            .specs
            .iter()
            .filter_map(|s| Some((s.family, self.get(s.family, true)?.value - self.get(s.family, false)?.value)))
            .collect()
    }
}

fn feature_set_name(axis: Axis, with: bool) -> String {
    format!("{}_{}", if with { "with" } else { "without" }, axis.as_str())
}

/// Targets for `idx`, with the learning task they imply.
fn targets(rows: &[ProfileRow], idx: &[usize], kind: ScoreKind, target: Target, components: &[Component]) -> Result<(Vec<f64>, Task)> {
    match target {
        Target::Raw => Ok((idx.iter().map(|&i| rows[i].raw_score).collect(), Task::Regression)),
        Target::Remainder => {
            if components.is_empty() {
                return Err(Error::NotFitted("remainder components"));
            }
            let y = idx.iter().map(|&i| compute_remainder(&rows[i], components)).collect::<Result<_>>()?;
            Ok((y, Task::Regression))
        }
        Target::Recidivism => {
            let y = idx
                .iter()
                .map(|&i| {
                    let l = &rows[i].recidivism;
                    let hit = match kind {
                        ScoreKind::General => l.general,
                        ScoreKind::Violent => l.violent,
                    };
                    if hit {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            Ok((y, Task::Classification))
        }
    }
}

/// Fits every configured family with the axis feature present and absent,
/// on one fold partition. Recidivism targets use observable rows only and
/// add the current-offense features.
pub fn ablation_table(
    rows: &[ProfileRow],
    kind: ScoreKind,
    target: Target,
    axis: Axis,
    components: &[Component],
    config: &AblationConfig,
) -> Result<AblationResult> {
    let mut t = ablation_tables(rows, kind, target, &[axis], components, config)?;
    Ok(t.remove(0))
}

fn axis_options(axis: Axis, present: bool, current_offense: bool) -> FeatureOptions {
    // Each axis keeps the other feature in both sets.
    FeatureOptions {
        age: axis == Axis::Race || present,
        race: axis == Axis::Age || present,
        current_offense,
    }
}

/// [`ablation_table`] for several axes on the same rows and folds. The set
/// with both age and race is shared between axes and fitted once.
pub fn ablation_tables(
    rows: &[ProfileRow],
    kind: ScoreKind,
    target: Target,
    axes: &[Axis],
    components: &[Component],
    config: &AblationConfig,
) -> Result<Vec<AblationResult>> {
    if config.folds < 2 {
        return Err(Error::Invalid("ablation needs at least 2 folds".into()));
    }
    let current_offense = target == Target::Recidivism;
    let base = axis_options(Axis::Age, true, current_offense);
    debug_assert!(base.age && base.race);
    let of_kind: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].score_kind == kind).collect();
    let idx: Vec<usize> = of_kind
        .iter()
        .copied()
        .filter(|&i| usable(&rows[i], &base) && (!current_offense || rows[i].recidivism.observable))
        .collect();
    if idx.is_empty() {
        return Err(Error::EmptyCohort("ablation rows"));
    }
    let (y, task) = targets(rows, &idx, kind, target, components)?;
    let strata: Vec<bool> = y.iter().map(|&v| v > 0.5).collect();
    let fold = folds::assign(idx.len(), config.folds, config.seed, (task == Task::Classification).then_some(&strata[..]));
    let metric = match task {
        Task::Regression => "rmse",
        Task::Classification => "misclassification",
    };

    let mut fits: Vec<(FeatureOptions, Vec<CvResult>)> = Vec::new();
    let mut out = Vec::with_capacity(axes.len());
    for &axis in axes {
        let mut entries = Vec::new();
        for present in [true, false] {
            let opts = axis_options(axis, present, current_offense);
            if !fits.iter().any(|(o, _)| *o == opts) {
                let x = build_matrix(rows, &idx, kind, &opts);
                let results = config
                    .specs
                    .iter()
                    .map(|spec| cross_validate(spec, &x, &y, task, &fold))
                    .collect::<Result<Vec<_>>>()?;
                fits.push((opts, results));
            }
            let (_, results) = fits.iter().find(|(o, _)| *o == opts).expect("fitted above");
            for (spec, r) in config.specs.iter().zip(results) {
                entries.push(AblationEntry {
                    family: spec.family,
                    feature_set: feature_set_name(axis, present),
                    metric: metric.into(),
                    value: r.cv_error,
                    fold_values: r.fold_errors.clone(),
                    chosen: r.chosen,
                });
            }
        }
        // Present and absent entries of one family side by side.
        let n_specs = config.specs.len();
        let mut ordered = Vec::with_capacity(entries.len());
        for s in 0..n_specs {
            ordered.push(entries[s].clone());
            ordered.push(entries[n_specs + s].clone());
        }
        out.push(AblationResult {
            score_kind: kind,
            target,
            axis,
            n: idx.len(),
            excluded: of_kind.len() - idx.len(),
            features_with: feature_names(kind, &axis_options(axis, true, current_offense)),
            features_without: feature_names(kind, &axis_options(axis, false, current_offense)),
            config: config.clone(),
            entries: ordered,
        });
    }
    Ok(out)
}

/// A prediction target: the raw score minus `components`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub components: Vec<Component>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPanel {
    pub stage: String,
    /// Held-out (predicted, actual) per usable row.
    pub pairs: Vec<(f64, f64)>,
    pub assessment_ids: Vec<String>,
    pub r_squared: f64,
    pub rmse: f64,
}

/// `1 − SS_res / SS_tot`; 0 when the actual values are constant.
pub fn r_squared(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len().max(1) as f64;
    let mean = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let ss_tot: f64 = pairs.iter().map(|p| (p.1 - mean) * (p.1 - mean)).sum();
    let ss_res: f64 = pairs.iter().map(|p| (p.1 - p.0) * (p.1 - p.0)).sum();
    if ss_tot <= 0.0 {
        0.0
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Held-out predictions of each stage's target from criminal history and age
/// at first arrest (no age, no race), with one fold partition for all stages.
pub fn prediction_scatter(rows: &[ProfileRow], kind: ScoreKind, stages: &[Stage], spec: &RegressorSpec, folds_k: usize) -> Result<Vec<ScatterPanel>> {
    let opts = FeatureOptions {
        age: false,
        race: false,
        current_offense: false,
    };
    let fm = feature_matrix(rows, kind, &opts);
    if fm.rows.is_empty() {
        return Err(Error::EmptyCohort("prediction rows"));
    }
    let fold = folds::assign(fm.rows.len(), folds_k, spec.seed, None);
    stages
        .iter()
        .map(|st| {
            let y = fm.rows.iter().map(|&i| compute_remainder(&rows[i], &st.components)).collect::<Result<Vec<_>>>()?;
            let r = train_predict(spec, &fm.x, &y, Task::Regression, &fold)?;
            let pairs: Vec<(f64, f64)> = r.heldout.iter().copied().zip(y.iter().copied()).collect();
            Ok(ScatterPanel {
                stage: st.name.clone(),
                r_squared: r_squared(&pairs),
                rmse: r.cv_error,
                assessment_ids: fm.rows.iter().map(|&i| rows[i].assessment_id.clone()).collect(),
                pairs,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecidProbability {
    pub assessment_id: String,
    pub decile_score: u8,
    pub probability: f64,
    pub label: bool,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecidProbabilities {
    pub rows: Vec<RecidProbability>,
    pub misclassification: f64,
    pub chosen: Hyper,
    pub features: Vec<String>,
}

/// Held-out boosted-tree probability of two-year violent recidivism for every
/// observable violent-score assessment, from criminal history, current
/// offense, age and age at first arrest.
pub fn violent_recid_probability(rows: &[ProfileRow], spec: &RegressorSpec, folds_k: usize) -> Result<RecidProbabilities> {
    let opts = FeatureOptions {
        age: true,
        race: false,
        current_offense: true,
    };
    let idx: Vec<usize> = (0..rows.len())
        .filter(|&i| rows[i].score_kind == ScoreKind::Violent && usable(&rows[i], &opts) && rows[i].recidivism.observable)
        .collect();
    if idx.is_empty() {
        return Err(Error::EmptyCohort("observable violent assessments"));
    }
    let x = build_matrix(rows, &idx, ScoreKind::Violent, &opts);
    let (y, task) = targets(rows, &idx, ScoreKind::Violent, Target::Recidivism, &[])?;
    let strata: Vec<bool> = y.iter().map(|&v| v > 0.5).collect();
    let fold = folds::assign(idx.len(), folds_k, spec.seed, Some(&strata));
    let r = train_predict(spec, &x, &y, task, &fold)?;
    Ok(RecidProbabilities {
        rows: idx
            .iter()
            .enumerate()
            .map(|(k, &i)| RecidProbability {
                assessment_id: rows[i].assessment_id.clone(),
                decile_score: rows[i].decile_score,
                probability: r.heldout[k],
                label: y[k] > 0.5,
                fold: fold[k],
            })
            .collect(),
        misclassification: r.cv_error,
        chosen: r.chosen,
        features: feature_names(ScoreKind::Violent, &opts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::CurrentOffenseFlags;
    use crate::records::{RecidivismLabel, Sex};
    use crate::subscales::{self, SubscaleVector};

    fn row(age: u32, raw: f64) -> ProfileRow {
        let v = SubscaleVector::default();
        ProfileRow {
            assessment_id: format!("a{age}"),
            person_id: format!("p{age}"),
            score_kind: ScoreKind::General,
            raw_score: raw,
            decile_score: 1,
            age,
            age_first: Some(age),
            sex: Sex::Male,
            race: Race::Caucasian,
            sums: Some(subscales::sums(&v)),
            subscales: Some(v),
            current: Some(CurrentOffenseFlags::default()),
            recidivism: RecidivismLabel::default(),
        }
    }

    #[test]
    fn age_component_zeroes_a_candidate() {
        let f = AgeSpline::published_continuous(ScoreKind::General);
        let raw = f.evaluate(20.0).unwrap();
        let r = compute_remainder(&row(20, raw), &[Component::Age { spline: f }]).unwrap();
        assert!(r.abs() < 1e-12);
    }

    #[test]
    fn no_components_is_identity() {
        assert_eq!(compute_remainder(&row(30, -1.25), &[]).unwrap(), -1.25);
    }

    #[test]
    fn unfitted_history_component_errors() {
        let mut r = row(30, 0.0);
        r.sums = None;
        let c = Component::ViolenceHistory { step: StepFunction::zero() };
        assert_eq!(compute_remainder(&r, &[c]), Err(Error::NotFitted("violence history sum")));
    }

    #[test]
    fn feature_layout() {
        let opts = FeatureOptions {
            age: true,
            race: true,
            current_offense: true,
        };
        let names = feature_names(ScoreKind::Violent, &opts);
        assert_eq!(names.len(), 8 + 3 + 1 + 1 + 5 + 3);
        let mut r = row(40, 0.0);
        r.race = Race::Hispanic;
        let mut out = Vec::new();
        feature_row(&r, ScoreKind::Violent, &opts, &mut out);
        assert_eq!(out.len(), names.len());
        assert_eq!(out[names.iter().position(|n| n == "race_hispanic").unwrap()], 1.0);
        assert_eq!(out[names.iter().position(|n| n == "age").unwrap()], 40.0);
    }

    #[test]
    fn r_squared_of_perfect_and_mean_predictions() {
        assert_eq!(r_squared(&[(1.0, 1.0), (2.0, 2.0)]), 1.0);
        assert_eq!(r_squared(&[(1.5, 1.0), (1.5, 2.0)]), 0.0);
    }
}
