//! Injected inconsistencies are found; faithful cohorts raise nothing.

use std::collections::BTreeSet;

use score_audit_core::anomalies::{
    flag_age_outliers, flag_low_score_long_history, flag_ml_decile_gap, percentiles, GapCutoffs, HistoryThresholds,
};
use score_audit_core::lowerbound::{default_segments, fit_spline_lower_bound, select_candidates, stage_one, AgeSpline};
use score_audit_core::ml::{Family, RegressorSpec};
use score_audit_core::profile::{build_profiles, ProfileRow};
use score_audit_core::records::{CohortDataset, IngestConfig, ScoreKind};
use score_audit_core::residuals::violent_recid_probability;
use score_audit_core::subscales::SubscaleConfig;
use score_audit_core::synthoracle::{generate, inject_age_typos, SyntheticSpec};

const C: f64 = 0.05;

fn profiles(d: &CohortDataset) -> Vec<ProfileRow> {
    build_profiles(d, &SubscaleConfig::default())
}

fn reconstruct(rows: &[ProfileRow], kind: ScoreKind) -> AgeSpline {
    let set = stage_one(select_candidates(rows, kind).unwrap(), 3, C).unwrap();
    fit_spline_lower_bound(&set.inliers, default_segments(kind)).unwrap()
}

#[test]
fn clean_cohort_has_no_age_outliers() {
    let mut spec = SyntheticSpec::default();
    spec.seed = 21;
    let c = generate(&spec, 2000).unwrap();
    let rows = profiles(&c.dataset);
    for kind in [ScoreKind::General, ScoreKind::Violent] {
        let f = reconstruct(&rows, kind);
        assert!(flag_age_outliers(&rows, kind, &f, C).is_empty(), "{kind}");
    }
}

fn flagged_persons<'a>(rows: &'a [ProfileRow], kind: ScoreKind, f: &AgeSpline) -> BTreeSet<&'a str> {
    flag_age_outliers(rows, kind, f, C)
        .iter()
        .map(|a| rows.iter().find(|r| r.assessment_id == a.assessment_id).unwrap().person_id.as_str())
        .collect()
}

#[test]
fn a_single_age_typo_is_peeled_and_flagged() {
    let mut spec = SyntheticSpec::default();
    spec.seed = 25;
    let c = generate(&spec, 2000).unwrap();
    let (raw, ids) = inject_age_typos(&c, 1, 35, 2).unwrap();
    let rows = profiles(&CohortDataset::ingest(&raw, &IngestConfig::default()).unwrap());
    for kind in [ScoreKind::General, ScoreKind::Violent] {
        let f = reconstruct(&rows, kind);
        let flagged = flagged_persons(&rows, kind, &f);
        assert_eq!(flagged.into_iter().collect::<Vec<_>>(), [ids[0].as_str()], "{kind}");
    }
}

#[test]
fn injected_age_typos_are_found() {
    let mut spec = SyntheticSpec::default();
    spec.seed = 22;
    let c = generate(&spec, 3000).unwrap();
    let clean = profiles(&c.dataset);
    let (raw, ids) = inject_age_typos(&c, 25, 20, 5).unwrap();
    let injected: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    let rows = profiles(&CohortDataset::ingest(&raw, &IngestConfig::default()).unwrap());
    for kind in [ScoreKind::General, ScoreKind::Violent] {
        let f = reconstruct(&clean, kind);
        let flagged = flagged_persons(&rows, kind, &f);
        let hits = flagged.intersection(&injected).count();
        assert!(hits as f64 >= 0.95 * 25.0, "{kind}: recall {hits}/25");
        assert_eq!(flagged.difference(&injected).count(), 0, "{kind}: false flags");
    }
}

#[test]
fn faithful_cohorts_raise_no_history_flags() {
    for seed in 0..4 {
        let mut spec = SyntheticSpec::default();
        spec.seed = seed;
        let c = generate(&spec, 3000).unwrap();
        let rows = profiles(&c.dataset);
        let flags = flag_low_score_long_history(&rows, &HistoryThresholds::default());
        assert!(flags.is_empty(), "seed {seed}: {:?}", flags.first());
    }
}

#[test]
fn long_history_with_a_low_decile_is_flagged() {
    let mut spec = SyntheticSpec::default();
    spec.seed = 23;
    let c = generate(&spec, 1000).unwrap();
    let mut rows = profiles(&c.dataset);
    let i = rows
        .iter()
        .position(|r| r.score_kind == ScoreKind::Violent && r.sums.unwrap().violence_history_sum >= 3)
        .unwrap();
    rows[i].decile_score = 1;
    let flags = flag_low_score_long_history(&rows, &HistoryThresholds::default());
    assert_eq!(flags.len(), 1);
    assert_eq!(flags[0].assessment_id, rows[i].assessment_id);
}

#[test]
fn injected_decile_mislabels_are_found() {
    let mut spec = SyntheticSpec::default();
    spec.seed = 24;
    let c = generate(&spec, 2500).unwrap();
    let rows = profiles(&c.dataset);
    let mut boost = RegressorSpec::new(Family::GradientBoostedTrees, 3);
    boost.boost_depths = vec![2];
    boost.boost_learning_rates = vec![0.1];
    boost.boost_rounds = vec![100];
    let probs = violent_recid_probability(&rows, &boost, 5).unwrap();
    let pct = percentiles(&probs.rows.iter().map(|r| r.probability).collect::<Vec<_>>());

    // 1% of rows, drawn from the extreme quartiles, get the opposite extreme
    // decile.
    let n_inject = probs.rows.len() / 100;
    let extreme: Vec<usize> = (0..pct.len()).filter(|&i| pct[i] > 0.75 || pct[i] <= 0.25).collect();
    let step = extreme.len() / n_inject;
    let chosen: Vec<usize> = (0..n_inject).map(|k| extreme[k * step]).collect();
    let mut raw = c.raw.clone();
    for &i in &chosen {
        let id = &probs.rows[i].assessment_id;
        let a = raw.assessments.iter_mut().find(|a| &a.assessment_id == id).unwrap();
        a.decile_score = if pct[i] > 0.75 { "1" } else { "10" }.to_string();
    }
    let rows = profiles(&CohortDataset::ingest(&raw, &IngestConfig::default()).unwrap());
    let probs = violent_recid_probability(&rows, &boost, 5).unwrap();
    let flagged: BTreeSet<String> = flag_ml_decile_gap(&probs.rows, &GapCutoffs::default())
        .into_iter()
        .map(|a| a.assessment_id)
        .collect();
    let hits = chosen.iter().filter(|&&i| flagged.contains(&probs.rows[i].assessment_id)).count();
    assert!(hits as f64 >= 0.8 * n_inject as f64, "recall {hits}/{n_inject}");
}
