use std::path::Path;

use anyhow::Result;
use serde::{Deserialize, Serialize};

use score_audit_core::anomalies::flag_age_outliers;
use score_audit_core::lowerbound::{
    data_assumption_counts, default_degree, default_segments, fit_spline_with, fit_violence_history_step,
    select_candidates, stage_one, subsample_robustness, support_summary, AgeSpline, PolyBound, SplineOptions,
    StepFunction, SubsampleReport, SupportRow,
};
use score_audit_core::profile::ProfileRow;
use score_audit_core::records::ScoreKind;
use score_audit_core::residuals::{compute_remainder, Component};

use super::{component_file, svg, write_config, Ctx, RECONSTRUCT_DIR};
use crate::io::{self, CsvOut};
use crate::svg::{Chart, BLUE, GREEN, GREY, ORANGE, RED};

/// Cap per age for the subsampling check.
pub const SUBSAMPLE_CAP: usize = 150;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub total_gap: f64,
    pub mean_gap: f64,
    pub se_gap: f64,
    pub lp_solves: usize,
}

/// Fitted components of one score, as written to `reconstruct/<kind>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub score_kind: ScoreKind,
    pub poly: PolyBound,
    pub spline: AgeSpline,
    pub c: f64,
    pub outlier_ids: Vec<String>,
    pub g_viol_hist: Option<StepFunction>,
    pub n_candidates: usize,
    pub n_inliers: usize,
    pub fit: FitSummary,
    pub subsample: SubsampleReport,
}

impl Components {
    /// Age spline, then the violence-history step when fitted.
    pub fn list(&self) -> Vec<Component> {
        let mut v = vec![Component::Age {
            spline: self.spline.clone(),
        }];
        if let Some(step) = &self.g_viol_hist {
            v.push(Component::ViolenceHistory { step: step.clone() });
        }
        v
    }

    pub fn load(dir: &Path, kind: ScoreKind) -> Result<Self> {
        io::read_json(&dir.join(component_file(kind)))
    }
}

/// (violence-history sum, raw − f_viol_age) over computable violent rows that
/// are not age outliers.
pub fn history_pairs(rows: &[ProfileRow], spline: &AgeSpline, c: f64) -> Vec<(u32, f64)> {
    let outliers: std::collections::BTreeSet<String> = flag_age_outliers(rows, ScoreKind::Violent, spline, c)
        .into_iter()
        .map(|a| a.assessment_id)
        .collect();
    let age = [Component::Age { spline: spline.clone() }];
    rows.iter()
        .filter(|r| r.score_kind == ScoreKind::Violent && !outliers.contains(&r.assessment_id))
        .filter_map(|r| Some((r.sums?.violence_history_sum, compute_remainder(r, &age).ok()?)))
        .collect()
}

pub struct Reconstruction {
    pub components: Components,
    pub counts: Vec<(u32, usize)>,
    pub support: Vec<SupportRow>,
}

pub fn reconstruct(rows: &[ProfileRow], kind: ScoreKind, segments: usize, c: f64, seed: u64) -> Result<Reconstruction> {
    let cands = select_candidates(rows, kind)?;
    let set = stage_one(cands.clone(), default_degree(kind), c)?;
    let fit = fit_spline_with(&set.inliers, &SplineOptions::new(segments))?;
    let g_viol_hist = match kind {
        ScoreKind::Violent => Some(fit_violence_history_step(&history_pairs(rows, &fit.spline, c))?),
        ScoreKind::General => None,
    };
    let ages = rows.iter().filter(|r| r.score_kind == kind).map(|r| r.age);
    let (lo, hi) = (ages.clone().min().unwrap_or(0), ages.max().unwrap_or(0));
    let counts = data_assumption_counts(&cands, lo, hi);
    let support = support_summary(&set.inliers);
    let subsample = subsample_robustness(&set.inliers, segments, SUBSAMPLE_CAP, seed)?;
    let components = Components {
        score_kind: kind,
        poly: set.bound.clone(),
        spline: fit.spline,
        c,
        outlier_ids: set.outliers.iter().map(|p| p.assessment_id.clone()).collect(),
        g_viol_hist,
        n_candidates: set.points.len(),
        n_inliers: set.inliers.len(),
        fit: FitSummary {
            total_gap: fit.total_gap,
            mean_gap: fit.mean_gap,
            se_gap: fit.se_gap,
            lp_solves: fit.lp_solves,
        },
        subsample,
    };
    Ok(Reconstruction {
        components,
        counts,
        support,
    })
}

fn curve(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    let n = ((hi - lo) * 4.0).ceil().max(1.0) as usize;
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).map(|a| (a, f(a))).collect()
}

fn write_outputs(dir: &Path, hash: &str, rows: &[ProfileRow], r: &Reconstruction) -> Result<()> {
    let comp = &r.components;
    let kind = comp.score_kind;
    let k = kind.as_str();
    io::write_json(&dir.join(component_file(kind)), hash, comp)?;

    let mut w = CsvOut::new(dir.join(format!("{k}_data_assumption.csv")), hash, &["age", "candidates"])?;
    for (a, n) in &r.counts {
        w.row([a.to_string(), n.to_string()])?;
    }
    w.finish()?;
    let mut w = CsvOut::new(dir.join(format!("{k}_support.csv")), hash, &["age", "min_raw", "count"])?;
    for s in &r.support {
        w.row([io::num(s.age), io::num(s.min_raw), s.count.to_string()])?;
    }
    w.finish()?;

    let of_kind: Vec<&ProfileRow> = rows.iter().filter(|r| r.score_kind == kind).collect();
    let lo = of_kind.iter().map(|r| r.age).min().unwrap_or(18) as f64;
    let hi = of_kind.iter().map(|r| r.age).max().unwrap_or(70) as f64;
    let outlier_ids: std::collections::BTreeSet<&str> = comp.outlier_ids.iter().map(String::as_str).collect();
    let mut candidates = Vec::new();
    let mut outliers = Vec::new();
    let mut others = Vec::new();
    for row in &of_kind {
        let p = (row.age as f64, row.raw_score);
        if outlier_ids.contains(row.assessment_id.as_str()) {
            outliers.push(p);
        } else if score_audit_core::lowerbound::is_candidate(row) {
            candidates.push(p);
        } else {
            others.push(p);
        }
    }
    let spline = comp.spline.clone();
    let poly = comp.poly.clone();
    let chart = Chart::new(&format!("{k} raw score vs age"), "age", "raw score", hash)
        .points(others, GREY, 1.5, 0.25)
        .points(candidates, BLUE, 2.0, 0.6)
        .points(outliers, RED, 3.0, 0.9)
        .line(curve(lo, hi, |a| poly.eval(a)), ORANGE, 1.5)
        .line(curve(lo, hi, |a| spline.eval_unchecked(a)), GREEN, 2.0)
        .legend("all assessments", GREY)
        .legend("lower-bound candidates", BLUE)
        .legend("candidate outliers", RED)
        .legend("polynomial bound", ORANGE)
        .legend("age spline", GREEN);
    svg(dir, &format!("{k}_scatter.svg"), &chart)?;

    let chart = Chart::new(&format!("{k}: candidates at the lower bound"), "age", "raw score", hash)
        .bubbles(r.support.iter().map(|s| (s.age, s.min_raw, s.count as f64)).collect(), BLUE)
        .line(curve(lo, hi, |a| spline.eval_unchecked(a)), GREEN, 1.0);
    svg(dir, &format!("{k}_support.svg"), &chart)?;

    let chart = Chart::new(&format!("{k}: candidates per age"), "age", "candidates", hash)
        .bars(r.counts.iter().map(|&(a, n)| (a as f64, n as f64, 0.8)).collect(), BLUE);
    svg(dir, &format!("{k}_data_assumption.svg"), &chart)?;

    let (mut equal, mut later) = (Vec::new(), Vec::new());
    for row in &of_kind {
        if let Some(f) = row.age_first {
            if f == row.age {
                equal.push((f as f64, row.raw_score));
            } else {
                later.push((f as f64, row.raw_score));
            }
        }
    }
    let chart = Chart::new(&format!("{k} raw score vs age at first arrest"), "age at first arrest", "raw score", hash)
        .points(later, RED, 1.5, 0.3)
        .points(equal, BLUE, 1.5, 0.5)
        .legend("age = age at first arrest", BLUE)
        .legend("age > age at first arrest", RED);
    svg(dir, &format!("{k}_age_first.svg"), &chart)?;
    Ok(())
}

pub fn run(ctx: &Ctx) -> Result<()> {
    let l = ctx.load()?;
    let dir = ctx.dir(RECONSTRUCT_DIR);
    let hash = write_config(&dir, &ctx.config("reconstruct", Some(l.digest)))?;
    for kind in ctx.opts.scores() {
        let k = ctx.opts.k.unwrap_or_else(|| default_segments(kind));
        let r = reconstruct(&l.rows, kind, k, ctx.opts.c, ctx.opts.seed)?;
        write_outputs(&dir, &hash, &l.rows, &r)?;
        let c = &r.components;
        let knots: Vec<String> = c.spline.knots().iter().map(|x| format!("{x:.2}")).collect();
        let slopes: Vec<String> = c.spline.slopes().iter().map(|x| format!("{x:.4}")).collect();
        println!(
            "{kind}: {} candidates, {} outliers; knots [{}], slopes [{}]",
            c.n_candidates,
            c.outlier_ids.len(),
            knots.join(", "),
            slopes.join(", ")
        );
    }
    Ok(())
}
