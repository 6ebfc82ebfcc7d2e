use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{Map, Value};

use score_audit_core::records::ScoreKind;

use super::{
    component_file, write_config, Ctx, ANOMALIES_DIR, DATASET_DIR, FAIRNESS_DIR, RECONSTRUCT_DIR, REPORT_DIR,
    RESIDUALS_DIR,
};
use crate::io::{self, sha256_hex};

/// Stages whose figures are collected, in report order.
const FIGURE_STAGES: [&str; 4] = [RECONSTRUCT_DIR, RESIDUALS_DIR, FAIRNESS_DIR, ANOMALIES_DIR];

fn svgs(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut v: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "svg"))
        .collect();
    v.sort();
    Ok(v)
}

pub fn run(ctx: &Ctx) -> Result<()> {
    let out = &ctx.opts.out;
    io::require_file(&out.join(DATASET_DIR).join("provenance.json"))?;

    let mut wanted: Vec<(String, PathBuf)> = vec![("provenance".into(), out.join(DATASET_DIR).join("provenance.json"))];
    for kind in [ScoreKind::General, ScoreKind::Violent] {
        let k = kind.as_str();
        wanted.push((format!("components.{k}"), out.join(RECONSTRUCT_DIR).join(component_file(kind))));
        wanted.push((format!("residuals.{k}"), out.join(RESIDUALS_DIR).join(format!("{k}_residuals.json"))));
    }
    wanted.push(("fairness.rates".into(), out.join(FAIRNESS_DIR).join("fairness.json")));
    wanted.push(("fairness.logistic".into(), out.join(FAIRNESS_DIR).join("logistic.json")));
    wanted.push(("anomalies".into(), out.join(ANOMALIES_DIR).join("anomalies.json")));

    let mut sections = Map::new();
    let mut missing = Vec::new();
    let mut digest_input = String::new();
    for (key, path) in &wanted {
        if !path.is_file() {
            missing.push(Value::from(key.as_str()));
            continue;
        }
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        digest_input.push_str(key);
        digest_input.push_str(&sha256_hex(&bytes));
        let v: Value = serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?;
        sections.insert(key.clone(), v);
    }

    let figures: Vec<(String, PathBuf)> = FIGURE_STAGES
        .iter()
        .map(|s| Ok(svgs(&out.join(s))?.into_iter().map(move |p| (s.to_string(), p))))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .map(|(s, p)| (format!("{s}_{}", p.file_name().unwrap().to_string_lossy()), p))
        .collect();
    for (name, p) in &figures {
        digest_input.push_str(name);
        digest_input.push_str(&sha256_hex(&fs::read(p)?));
    }

    let dir = ctx.dir(REPORT_DIR);
    let hash = write_config(&dir, &ctx.config("report", Some(sha256_hex(digest_input.as_bytes()))))?;
    let fig_dir = dir.join("figures");
    for (name, p) in &figures {
        io::write_bytes(&fig_dir.join(name), &fs::read(p)?)?;
    }
    let report = serde_json::json!({
        "sections": sections,
        "missing": missing,
        "figures": figures.iter().map(|(n, _)| format!("figures/{n}")).collect::<Vec<_>>(),
    });
    io::write_json(&dir.join("report.json"), &hash, &report)?;
    println!(
        "report with {} sections and {} figures in {}",
        wanted.len() - missing.len(),
        figures.len(),
        dir.display()
    );
    Ok(())
}
