//! Assessments that disagree with the reconstruction: scores below the age
//! bound, low deciles despite long histories, and deciles far from a
//! recidivism model's ranking.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::lowerbound::AgeSpline;
use crate::profile::ProfileRow;
use crate::records::ScoreKind;
use crate::residuals::RecidProbability;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    AgeOutlier,
    LowScoreLongHistory,
    MlDecileGap,
}

impl AnomalyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyKind::AgeOutlier => "age_outlier",
            AnomalyKind::LowScoreLongHistory => "low_score_long_history",
            AnomalyKind::MlDecileGap => "ml_decile_gap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub kind: AnomalyKind,
    pub assessment_id: String,
    pub score_kind: ScoreKind,
    /// The inputs of the rule, enough to re-derive the flag.
    pub evidence: BTreeMap<String, f64>,
    pub severity: f64,
}

fn evidence<const N: usize>(items: [(&str, f64); N]) -> BTreeMap<String, f64> {
    items.iter().map(|(k, v)| (String::from(*k), *v)).collect()
}

/// Rows of `kind` with `raw < spline(age) − c`; severity is the gap
/// `spline(age) − raw`. Ages outside the spline's domain are skipped.
pub fn flag_age_outliers(rows: &[ProfileRow], kind: ScoreKind, spline: &AgeSpline, c: f64) -> Vec<AnomalyReport> {
    rows.iter()
        .filter(|r| r.score_kind == kind)
        .filter_map(|r| {
            let bound = spline.evaluate(r.age as f64).ok()?;
            let gap = bound - r.raw_score;
            (gap > c).then(|| AnomalyReport {
                kind: AnomalyKind::AgeOutlier,
                assessment_id: r.assessment_id.clone(),
                score_kind: kind,
                evidence: evidence([
                    ("age", r.age as f64),
                    ("raw_score", r.raw_score),
                    ("bound", bound),
                    ("gap", gap),
                    ("c", c),
                ]),
                severity: gap,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryThresholds {
    pub decile_max: u8,
    /// Applies to violent-score assessments.
    pub violence_min: u32,
    /// Applies to general-score assessments.
    pub arrests_min: u32,
}

impl Default for HistoryThresholds {
    fn default() -> Self {
        Self {
            decile_max: 2,
            violence_min: 3,
            arrests_min: 10,
        }
    }
}

/// Deciles at most `decile_max` although the history input of that score is
/// long: prior arrests for the general score, the violence-history sum for
/// the violent score. Severity is the history over its threshold.
pub fn flag_low_score_long_history(rows: &[ProfileRow], th: &HistoryThresholds) -> Vec<AnomalyReport> {
    rows.iter()
        .filter(|r| r.decile_score <= th.decile_max)
        .filter_map(|r| {
            let v = r.subscales.as_ref()?;
            let (name, value, min) = match r.score_kind {
                ScoreKind::General => ("n_arrests", v.criminal_involvement.n_arrests, th.arrests_min),
                ScoreKind::Violent => (
                    "violence_history_sum",
                    v.violence_history.to_array().iter().sum::<u32>(),
                    th.violence_min,
                ),
            };
            (value >= min).then(|| AnomalyReport {
                kind: AnomalyKind::LowScoreLongHistory,
                assessment_id: r.assessment_id.clone(),
                score_kind: r.score_kind,
                evidence: evidence([
                    ("decile", r.decile_score as f64),
                    (name, value as f64),
                    ("threshold", min as f64),
                ]),
                severity: value as f64 / min.max(1) as f64,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapCutoffs {
    /// Percentile above which a probability counts as high.
    pub high_percentile: f64,
    /// Percentile at or below which a probability counts as low.
    pub low_percentile: f64,
    pub low_decile_max: u8,
    pub high_decile_min: u8,
}

impl Default for GapCutoffs {
    fn default() -> Self {
        Self {
            high_percentile: 0.75,
            low_percentile: 0.25,
            low_decile_max: 3,
            high_decile_min: 8,
        }
    }
}

/// Share of probabilities at or below each one.
pub fn percentiles(p: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .map(|&v| sorted.partition_point(|&s| s <= v) as f64 / n)
        .collect()
}

/// The rule for one row, given its probability percentile.
pub fn ml_decile_gap(percentile: f64, decile: u8, cut: &GapCutoffs) -> Option<f64> {
    let high = percentile > cut.high_percentile && decile <= cut.low_decile_max;
    let low = percentile <= cut.low_percentile && decile >= cut.high_decile_min;
    (high || low).then(|| (percentile - decile as f64 / 10.0).abs())
}

/// Rows whose model probability is in the top quarter while the decile is
/// low, or in the bottom quarter while the decile is high. Severity is
/// `|percentile − decile/10|`.
pub fn flag_ml_decile_gap(probs: &[RecidProbability], cut: &GapCutoffs) -> Vec<AnomalyReport> {
    let p: Vec<f64> = probs.iter().map(|r| r.probability).collect();
    let pct = percentiles(&p);
    probs
        .iter()
        .zip(pct)
        .filter_map(|(r, q)| {
            let severity = ml_decile_gap(q, r.decile_score, cut)?;
            Some(AnomalyReport {
                kind: AnomalyKind::MlDecileGap,
                assessment_id: r.assessment_id.clone(),
                score_kind: ScoreKind::Violent,
                evidence: evidence([
                    ("probability", r.probability),
                    ("percentile", q),
                    ("decile", r.decile_score as f64),
                ]),
                severity,
            })
        })
        .collect()
}
