use anyhow::Result;
use serde::Serialize;

use score_audit_core::fairness::{
    age_distribution_by_race, fit_propublica_logistic, race_rates, recid_probability_vs_age, AgeDistribution,
    AgeProportion, ConfusionRates, LogisticFit, Ratio, RiskRule, DEFAULT_FAIRNESS_FOLDS,
};
use score_audit_core::records::ScoreKind;

use super::{svg, write_config, Ctx, FAIRNESS_DIR};
use crate::io::{self, CsvOut};
use crate::svg::{Chart, BLUE, PALETTE, RED};

/// Half-width of the moving window for the recidivism-by-age curve.
pub const CURVE_HALF_WIDTH: u32 = 2;

#[derive(Debug, Serialize)]
struct LogisticOut {
    fit: Option<LogisticFit>,
    error: Option<String>,
    decile_cut: u8,
}

#[derive(Debug, Serialize)]
struct FairnessOut<'a> {
    folds: usize,
    rules: Vec<RuleSummary>,
    age_distribution: &'a [AgeDistribution],
    /// African-American minus Caucasian, pooled over folds.
    fpr_gap: Vec<(String, Option<f64>)>,
}

#[derive(Debug, Serialize)]
struct RuleSummary {
    rule: String,
    pooled: Vec<ConfusionRates>,
}

fn rule_name(r: RiskRule) -> String {
    match r {
        RiskRule::Age { cutoff } => format!("age_le_{cutoff}"),
        RiskRule::Decile { cut } => format!("decile_gt_{cut}"),
    }
}

fn ratio(r: Option<Ratio>) -> String {
    io::opt_num(r.map(Ratio::value))
}

fn pooled_fpr(rates: &[ConfusionRates], group: &str) -> Option<f64> {
    rates
        .iter()
        .find(|r| r.fold.is_none() && r.group == group)
        .and_then(|r| r.fpr)
        .map(Ratio::value)
}

pub fn run(ctx: &Ctx) -> Result<()> {
    let l = ctx.load()?;
    let dir = ctx.dir(FAIRNESS_DIR);
    let hash = write_config(&dir, &ctx.config("fairness", Some(l.digest)))?;
    let folds = ctx.opts.folds.unwrap_or(DEFAULT_FAIRNESS_FOLDS);
    let rules = [
        RiskRule::Age {
            cutoff: ctx.opts.age_cutoff,
        },
        RiskRule::Decile {
            cut: ctx.opts.decile_cut,
        },
    ];

    let header = [
        "rule", "group", "fold", "tpr", "fpr", "tnr", "fnr", "tp", "fp", "tn", "fn",
    ];
    let mut w = CsvOut::new(dir.join("rates.csv"), &hash, &header)?;
    let mut summaries = Vec::new();
    let mut gaps = Vec::new();
    for rule in rules {
        let rates = race_rates(&l.rows, rule, folds, ctx.opts.seed)?;
        let name = rule_name(rule);
        for r in &rates {
            let c = r.counts;
            w.row([
                name.clone(),
                r.group.clone(),
                r.fold.map_or("all".to_string(), |f| f.to_string()),
                ratio(r.tpr),
                ratio(r.fpr),
                ratio(r.tnr),
                ratio(r.fnr),
                c.tp.to_string(),
                c.fp.to_string(),
                c.tn.to_string(),
                c.fn_.to_string(),
            ])?;
        }
        let gap = match (pooled_fpr(&rates, "african_american"), pooled_fpr(&rates, "caucasian")) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        };
        gaps.push((name.clone(), gap));
        rate_chart(&dir, &hash, &name, &rates)?;
        summaries.push(RuleSummary {
            rule: name,
            pooled: rates.into_iter().filter(|r| r.fold.is_none()).collect(),
        });
    }
    w.finish()?;

    let logistic = match fit_propublica_logistic(&l.rows, ctx.opts.decile_cut) {
        Ok(fit) => LogisticOut {
            fit: Some(fit),
            error: None,
            decile_cut: ctx.opts.decile_cut,
        },
        Err(e) => LogisticOut {
            fit: None,
            error: Some(e.to_string()),
            decile_cut: ctx.opts.decile_cut,
        },
    };
    io::write_json(&dir.join("logistic.json"), &hash, &logistic)?;

    let mut w = CsvOut::new(dir.join("recid_vs_age.csv"), &hash, &["score_kind", "age", "n", "proportion"])?;
    let mut curves: Vec<(ScoreKind, Vec<AgeProportion>)> = Vec::new();
    for kind in [ScoreKind::General, ScoreKind::Violent] {
        let curve = recid_probability_vs_age(&l.rows, kind, CURVE_HALF_WIDTH);
        for p in &curve {
            w.row([kind.as_str().to_string(), p.age.to_string(), p.n.to_string(), io::num(p.proportion)])?;
        }
        curves.push((kind, curve));
    }
    w.finish()?;
    let mut chart = Chart::new("two-year recidivism by age", "age", "proportion", &hash);
    for (i, (kind, curve)) in curves.iter().enumerate() {
        let color = [BLUE, RED][i];
        chart = chart
            .line(curve.iter().map(|p| (p.age as f64, p.proportion)).collect(), color, 2.0)
            .legend(kind.as_str(), color);
    }
    svg(&dir, "recid_vs_age.svg", &chart)?;

    let dist = age_distribution_by_race(&l.rows, ScoreKind::General);
    let mut w = CsvOut::new(dir.join("age_distribution.csv"), &hash, &["race", "age", "share"])?;
    let mut chart = Chart::new("screening age by race", "age", "share", &hash);
    for (i, d) in dist.iter().enumerate() {
        for &(a, s) in &d.histogram {
            w.row([d.race.as_str().to_string(), a.to_string(), io::num(s)])?;
        }
        let color = PALETTE[i % PALETTE.len()];
        chart = chart
            .line(d.histogram.iter().map(|&(a, s)| (a as f64, s)).collect(), color, 1.5)
            .legend(&format!("{} (median {})", d.race.as_str(), d.median), color);
    }
    w.finish()?;
    svg(&dir, "age_histograms.svg", &chart)?;

    io::write_json(
        &dir.join("fairness.json"),
        &hash,
        &FairnessOut {
            folds,
            rules: summaries,
            age_distribution: &dist,
            fpr_gap: gaps.clone(),
        },
    )?;
    for (rule, gap) in gaps {
        match gap {
            Some(g) => println!("{rule}: FPR gap (african_american - caucasian) {g:+.4}"),
            None => println!("{rule}: FPR gap undefined"),
        }
    }
    Ok(())
}

fn rate_chart(dir: &std::path::Path, hash: &str, name: &str, rates: &[ConfusionRates]) -> Result<()> {
    let pooled: Vec<&ConfusionRates> = rates.iter().filter(|r| r.fold.is_none()).collect();
    let mut fpr = Vec::new();
    let mut fnr = Vec::new();
    let mut ticks = Vec::new();
    for (i, r) in pooled.iter().enumerate() {
        let x = i as f64;
        if let Some(v) = r.fpr {
            fpr.push((x - 0.18, v.value(), 0.34));
        }
        if let Some(v) = r.fnr {
            fnr.push((x + 0.18, v.value(), 0.34));
        }
        ticks.push((x, r.group.clone()));
    }
    let chart = Chart::new(&format!("error rates by race, {name}"), "", "rate", hash)
        .bars(fpr, BLUE)
        .bars(fnr, RED)
        .legend("false positive rate", BLUE)
        .legend("false negative rate", RED)
        .x_ticks(ticks)
        .x_range(-0.6, pooled.len() as f64 - 0.4)
        .y_range(0.0, 1.0);
    svg(dir, &format!("rates_{name}.svg"), &chart)
}
