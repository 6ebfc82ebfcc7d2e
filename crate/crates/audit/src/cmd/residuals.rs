use anyhow::Result;
use serde::Serialize;

use score_audit_core::ml::{Family, RegressorSpec};
use score_audit_core::profile::ProfileRow;
use score_audit_core::records::ScoreKind;
use score_audit_core::residuals::{
    ablation_table, ablation_tables, compute_remainder, prediction_scatter, AblationConfig, AblationResult, Axis,
    ScatterPanel, Stage, Target,
};

use super::reconstruct::Components;
use super::{component_file, svg, upstream_digest, write_config, Ctx, RECONSTRUCT_DIR, RESIDUALS_DIR};
use crate::io::{self, CsvOut};
use crate::svg::{Chart, BLUE, GREEN, GREY, RED};

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Serialize)]
struct ResidualsOut<'a> {
    score_kind: ScoreKind,
    ablations: &'a [AblationResult],
    prediction: Vec<PanelSummary>,
}

#[derive(Debug, Serialize)]
struct PanelSummary {
    stage: String,
    n: usize,
    r_squared: f64,
    rmse: f64,
}

fn stages(c: &Components) -> Vec<Stage> {
    let all = c.list();
    let mut s = vec![
        Stage {
            name: "raw".into(),
            components: vec![],
        },
        Stage {
            name: "minus age".into(),
            components: all[..1].to_vec(),
        },
    ];
    if all.len() > 1 {
        s.push(Stage {
            name: "minus age and history".into(),
            components: all,
        });
    }
    s
}

fn ablation_csv(path: std::path::PathBuf, hash: &str, tables: &[AblationResult]) -> Result<()> {
    let header = ["target", "axis", "family", "feature_set", "metric", "value", "n", "chosen", "fold_values"];
    let mut w = CsvOut::new(path, hash, &header)?;
    for t in tables {
        for e in &t.entries {
            let folds: Vec<String> = e.fold_values.iter().map(|&v| io::num(v)).collect();
            w.row([
                serde_json::to_value(t.target)?.as_str().unwrap_or_default().to_string(),
                t.axis.as_str().to_string(),
                e.family.as_str().to_string(),
                e.feature_set.clone(),
                e.metric.clone(),
                io::num(e.value),
                t.n.to_string(),
                serde_json::to_string(&e.chosen)?,
                folds.join(";"),
            ])?;
        }
    }
    w.finish()
}

fn remainder_outputs(dir: &std::path::Path, hash: &str, rows: &[ProfileRow], c: &Components) -> Result<()> {
    let kind = c.score_kind;
    let k = kind.as_str();
    let comps = c.list();
    let age_only = &comps[..1];
    let header = [
        "assessment_id",
        "age",
        "history_sum",
        "noncompliance_sum",
        "raw_score",
        "minus_age",
        "remainder",
    ];
    let mut w = CsvOut::new(dir.join(format!("{k}_remainder.csv")), hash, &header)?;
    let mut hist = Vec::new();
    let mut nonc = Vec::new();
    for r in rows.iter().filter(|r| r.score_kind == kind) {
        let Some(s) = r.sums else { continue };
        let (Ok(a), Ok(full)) = (compute_remainder(r, age_only), compute_remainder(r, &comps)) else {
            continue;
        };
        let h = match kind {
            ScoreKind::General => s.criminal_involvement_sum,
            ScoreKind::Violent => s.violence_history_sum,
        };
        w.row([
            r.assessment_id.clone(),
            r.age.to_string(),
            h.to_string(),
            s.noncompliance_sum.to_string(),
            io::num(r.raw_score),
            io::num(a),
            io::num(full),
        ])?;
        hist.push((h as f64, a));
        nonc.push((s.noncompliance_sum as f64, full));
    }
    w.finish()?;

    let x_label = match kind {
        ScoreKind::General => "criminal involvement sum",
        ScoreKind::Violent => "violence history sum",
    };
    let mut chart = Chart::new(&format!("{k} score minus age spline"), x_label, "raw score minus age spline", hash)
        .points(hist, BLUE, 2.0, 0.3);
    if let Some(g) = &c.g_viol_hist {
        let top = g.values().len() as u32 + 1;
        let steps: Vec<(f64, f64)> = (0..=top)
            .flat_map(|s| [(s as f64 - 0.5, g.eval(s)), (s as f64 + 0.5, g.eval(s))])
            .collect();
        chart = chart.line(steps, GREEN, 2.0).legend("history step", GREEN);
    }
    svg(dir, &format!("{k}_remainder_vs_history.svg"), &chart)?;
    if kind == ScoreKind::Violent {
        let chart = Chart::new(
            "violent remainder after age and history",
            "noncompliance sum",
            "remainder",
            hash,
        )
        .points(nonc, RED, 2.0, 0.3);
        svg(dir, &format!("{k}_remainder_vs_noncompliance.svg"), &chart)?;
    }
    Ok(())
}

fn panel_chart(k: &str, p: &ScatterPanel, hash: &str) -> Chart {
    let lo = p.pairs.iter().flat_map(|q| [q.0, q.1]).fold(f64::INFINITY, f64::min);
    let hi = p.pairs.iter().flat_map(|q| [q.0, q.1]).fold(f64::NEG_INFINITY, f64::max);
    Chart::new(
        &format!("{k}, {}: R² {:.3}, RMSE {:.3}", p.stage, p.r_squared, p.rmse),
        "predicted",
        "actual",
        hash,
    )
    .points(p.pairs.clone(), BLUE, 1.5, 0.3)
    .line(vec![(lo, lo), (hi, hi)], GREY, 1.0)
}

pub fn run(ctx: &Ctx) -> Result<()> {
    let kinds = ctx.opts.scores();
    let rdir = ctx.dir(RECONSTRUCT_DIR);
    let names: Vec<String> = kinds.iter().map(|&k| component_file(k)).collect();
    let comps: Vec<Components> = kinds.iter().map(|&k| Components::load(&rdir, k)).collect::<Result<_>>()?;
    let l = ctx.load()?;
    let digest = upstream_digest(&rdir, &names, &l.digest)?;

    let dir = ctx.dir(RESIDUALS_DIR);
    let hash = write_config(&dir, &ctx.config("residuals", Some(digest)))?;
    let folds = ctx.opts.folds.unwrap_or(DEFAULT_FOLDS);
    let seed = ctx.opts.seed;
    let config = AblationConfig {
        folds,
        seed,
        specs: ctx.opts.families().into_iter().map(|f| RegressorSpec::new(f, seed)).collect(),
    };

    for c in &comps {
        let kind = c.score_kind;
        let k = kind.as_str();
        remainder_outputs(&dir, &hash, &l.rows, c)?;

        let list = c.list();
        let mut tables = ablation_tables(&l.rows, kind, Target::Remainder, &[Axis::Age, Axis::Race], &list, &config)?;
        tables.push(ablation_table(&l.rows, kind, Target::Recidivism, Axis::Race, &[], &config)?);
        ablation_csv(dir.join(format!("{k}_ablation.csv")), &hash, &tables)?;

        let boost = RegressorSpec::new(Family::GradientBoostedTrees, seed);
        let panels = prediction_scatter(&l.rows, kind, &stages(c), &boost, folds)?;
        for (i, p) in panels.iter().enumerate() {
            svg(&dir, &format!("{k}_prediction_{i}.svg"), &panel_chart(k, p, &hash))?;
        }
        io::write_json(&dir.join(format!("{k}_prediction.json")), &hash, &panels)?;
        let out = ResidualsOut {
            score_kind: kind,
            ablations: &tables,
            prediction: panels
                .iter()
                .map(|p| PanelSummary {
                    stage: p.stage.clone(),
                    n: p.pairs.len(),
                    r_squared: p.r_squared,
                    rmse: p.rmse,
                })
                .collect(),
        };
        io::write_json(&dir.join(format!("{k}_residuals.json")), &hash, &out)?;

        for t in &tables {
            let metric = t.entries.first().map_or("", |e| e.metric.as_str());
            for (family, delta) in t.deltas() {
                println!(
                    "{k} {:?} by {}: {} {metric} with minus without {delta:+.4}",
                    t.target,
                    t.axis.as_str(),
                    family.as_str()
                );
            }
        }
    }
    Ok(())
}
