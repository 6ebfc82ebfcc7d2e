use std::collections::BTreeMap;

use anyhow::Result;
use serde::Serialize;

use score_audit_core::anomalies::{
    flag_age_outliers, flag_low_score_long_history, flag_ml_decile_gap, AnomalyReport, GapCutoffs, HistoryThresholds,
};
use score_audit_core::ml::{Family, RegressorSpec};
use score_audit_core::records::ScoreKind;
use score_audit_core::residuals::violent_recid_probability;

use super::reconstruct::Components;
use super::residuals::DEFAULT_FOLDS;
use super::{component_file, svg, upstream_digest, write_config, Ctx, ANOMALIES_DIR, RECONSTRUCT_DIR};
use crate::io::{self, CsvOut};
use crate::svg::{Chart, BLUE, RED};

#[derive(Debug, Serialize)]
struct AnomaliesOut<'a> {
    c: f64,
    history: HistoryThresholds,
    gap: GapCutoffs,
    counts: BTreeMap<String, usize>,
    reports: &'a [AnomalyReport],
}

pub fn run(ctx: &Ctx) -> Result<()> {
    let kinds = ctx.opts.scores();
    let rdir = ctx.dir(RECONSTRUCT_DIR);
    let names: Vec<String> = kinds.iter().map(|&k| component_file(k)).collect();
    let comps: Vec<Components> = kinds.iter().map(|&k| Components::load(&rdir, k)).collect::<Result<_>>()?;
    let l = ctx.load()?;
    let digest = upstream_digest(&rdir, &names, &l.digest)?;
    let dir = ctx.dir(ANOMALIES_DIR);
    let hash = write_config(&dir, &ctx.config("anomalies", Some(digest)))?;
    let th = ctx.thresholds;
    let c = ctx.opts.c;

    let mut reports = Vec::new();
    for comp in &comps {
        reports.extend(flag_age_outliers(&l.rows, comp.score_kind, &comp.spline, c));
    }
    reports.extend(
        flag_low_score_long_history(&l.rows, &th.history)
            .into_iter()
            .filter(|a| kinds.contains(&a.score_kind)),
    );

    if kinds.contains(&ScoreKind::Violent) {
        let spec = RegressorSpec::new(Family::GradientBoostedTrees, ctx.opts.seed);
        let probs = violent_recid_probability(&l.rows, &spec, ctx.opts.folds.unwrap_or(DEFAULT_FOLDS))?;
        reports.extend(flag_ml_decile_gap(&probs.rows, &th.gap));

        let mut w = CsvOut::new(
            dir.join("violent_probability.csv"),
            &hash,
            &["assessment_id", "decile_score", "probability", "label", "fold"],
        )?;
        for p in &probs.rows {
            w.row([
                p.assessment_id.clone(),
                p.decile_score.to_string(),
                io::num(p.probability),
                (p.label as u8).to_string(),
                p.fold.to_string(),
            ])?;
        }
        w.finish()?;
        let (pos, neg): (Vec<_>, Vec<_>) = probs.rows.iter().partition(|p| p.label);
        let jitter = |i: usize| ((i * 7919) % 100) as f64 / 100.0 * 0.5 - 0.25;
        let pts = |v: &[&score_audit_core::residuals::RecidProbability]| {
            v.iter()
                .enumerate()
                .map(|(i, p)| (p.decile_score as f64 + jitter(i), p.probability))
                .collect::<Vec<_>>()
        };
        let chart = Chart::new(
            "predicted violent recidivism vs violent decile",
            "violent decile score",
            "predicted probability",
            &hash,
        )
        .points(pts(&neg), BLUE, 1.5, 0.3)
        .points(pts(&pos), RED, 1.5, 0.4)
        .legend("no violent charge in two years", BLUE)
        .legend("violent charge in two years", RED)
        .x_range(0.4, 10.6);
        svg(&dir, "violent_probability_vs_decile.svg", &chart)?;
    }

    let mut w = CsvOut::new(
        dir.join("anomalies.csv"),
        &hash,
        &["kind", "assessment_id", "score_kind", "severity", "evidence"],
    )?;
    let mut counts = BTreeMap::new();
    for a in &reports {
        let ev: Vec<String> = a.evidence.iter().map(|(k, v)| format!("{k}={}", io::num(*v))).collect();
        w.row([
            a.kind.as_str().to_string(),
            a.assessment_id.clone(),
            a.score_kind.as_str().to_string(),
            io::num(a.severity),
            ev.join(";"),
        ])?;
        *counts
            .entry(format!("{}/{}", a.kind.as_str(), a.score_kind.as_str()))
            .or_insert(0) += 1;
    }
    w.finish()?;
    io::write_json(
        &dir.join("anomalies.json"),
        &hash,
        &AnomaliesOut {
            c,
            history: th.history,
            gap: th.gap,
            counts: counts.clone(),
            reports: &reports,
        },
    )?;
    for (k, n) in &counts {
        println!("{k}: {n}");
    }
    if counts.is_empty() {
        println!("no anomalies flagged");
    }
    Ok(())
}
