use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn audit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_audit"))
        .current_dir(dir)
        .env_remove("AUDIT_STATUTE_TABLE")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn ok(dir: &Path, args: &[&str]) {
    let o = audit(dir, args);
    assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn synth_then_reconstruct_violent() {
    let t = tempfile::tempdir().unwrap();
    ok(t.path(), &["synth", "--n", "5000", "--seed", "7"]);
    ok(t.path(), &["reconstruct", "--score", "violent", "--K", "4"]);
    let dir = t.path().join("audit-out/reconstruct");
    assert!(dir.join("violent_scatter.svg").is_file());
    let v: Value = serde_json::from_slice(&fs::read(dir.join("violent.json")).unwrap()).unwrap();
    let spec: Value =
        serde_json::from_slice(&fs::read(t.path().join("audit-out/synth/spec.json")).unwrap()).unwrap();
    let knots: Vec<f64> = serde_json::from_value(v["spline"]["knots"].clone()).unwrap();
    let truth: Vec<f64> = serde_json::from_value(spec["violent"]["age"]["knots"].clone()).unwrap();
    assert_eq!(knots.len(), 3);
    for (k, t) in knots.iter().zip(&truth) {
        assert!((k - t).abs() <= 1.0, "{knots:?} vs {truth:?}");
    }
    assert!(v["g_viol_hist"]["values"][0].as_f64() == Some(0.0));
    assert!(!dir.join("general.json").exists());
}

#[test]
fn downstream_verbs_need_their_inputs() {
    let t = tempfile::tempdir().unwrap();
    for verb in ["reconstruct", "features", "fairness", "residuals", "anomalies", "report"] {
        assert_eq!(code(&audit(t.path(), &[verb])), 2, "{verb}");
    }
    let missing = t.path().join("nowhere");
    assert_eq!(code(&audit(t.path(), &["ingest", "--input", missing.to_str().unwrap()])), 2);

    ok(t.path(), &["synth", "--n", "300", "--seed", "1"]);
    assert_eq!(code(&audit(t.path(), &["residuals"])), 2, "residuals needs reconstruct outputs");
    assert_eq!(code(&audit(t.path(), &["anomalies"])), 2);
}

#[test]
fn bad_flags_exit_64() {
    let t = tempfile::tempdir().unwrap();
    for args in [
        &["reconstruct", "--score", "both"][..],
        &["reconstruct", "--K", "0"],
        &["reconstruct", "--c", "-1"],
        &["fairness", "--folds", "1"],
        &["fairness", "--decile-cut", "11"],
        &["fairness", "--pretrial-only", "maybe"],
        &["synth", "--n", "0"],
        &["ingest"],
        &["fairness", "--thresholds", "missing.json"],
        &["frobnicate"],
        &["reconstruct", "--no-such-flag"],
    ] {
        assert_eq!(code(&audit(t.path(), args)), 64, "{args:?}");
    }
    assert_eq!(code(&audit(t.path(), &["--help"])), 0);
}

#[test]
fn fairness_rates_cover_ten_folds_per_group() {
    let t = tempfile::tempdir().unwrap();
    ok(t.path(), &["synth", "--n", "1200", "--seed", "2"]);
    ok(t.path(), &["fairness", "--age-cutoff", "24"]);
    let text = fs::read_to_string(t.path().join("audit-out/fairness/rates.csv")).unwrap();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let mut per: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    for r in rdr.records() {
        let r = r.unwrap();
        per.entry((r[0].to_string(), r[1].to_string())).or_default().push(r[2].to_string());
    }
    assert!(per.keys().any(|k| k.0 == "age_le_24"));
    for (k, folds) in &per {
        let mut want: Vec<String> = (0..10).map(|f| f.to_string()).collect();
        want.push("all".into());
        assert_eq!(folds, &want, "{k:?}");
    }
}

#[test]
fn identical_runs_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for t in [a.path(), b.path()] {
        ok(t, &["synth", "--n", "800", "--seed", "5"]);
        ok(t, &["features"]);
        ok(t, &["reconstruct"]);
        ok(t, &["fairness"]);
        ok(t, &["anomalies", "--score", "general"]);
        ok(t, &["report"]);
    }
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (p, bytes) in &fa {
        assert!(bytes == &fb[p], "{} differs", p.display());
    }
}

#[test]
fn every_output_names_its_config_hash() {
    let t = tempfile::tempdir().unwrap();
    ok(t.path(), &["synth", "--n", "600", "--seed", "9"]);
    ok(t.path(), &["features"]);
    ok(t.path(), &["reconstruct", "--score", "general"]);
    ok(t.path(), &["fairness"]);
    ok(t.path(), &["report"]);
    let out = t.path().join("audit-out");
    for (p, bytes) in files(&out) {
        let text = String::from_utf8(bytes).unwrap();
        let stage = p.components().next().unwrap().as_os_str().to_str().unwrap().to_string();
        let cfg: Value = serde_json::from_str(&fs::read_to_string(out.join(&stage).join("config.json")).unwrap()).unwrap();
        let own = cfg["config_hash"].as_str().unwrap();
        let named = match p.extension().unwrap().to_str().unwrap() {
            "csv" => text.lines().next().unwrap().strip_prefix("# config_hash=").unwrap().to_string(),
            "json" => serde_json::from_str::<Value>(&text).unwrap()["config_hash"].as_str().unwrap().to_string(),
            "svg" => {
                let i = text.find("config_hash: ").unwrap() + 13;
                text[i..i + 64].to_string()
            }
            other => panic!("unexpected output {other}"),
        };
        assert_eq!(named.len(), 64, "{}", p.display());
        // Report figures are copies and keep the hash of the stage that drew them.
        if !p.starts_with("report/figures") {
            assert_eq!(named, own, "{}", p.display());
        }
    }
}

#[test]
fn reingesting_the_canonical_dataset_changes_nothing() {
    let t = tempfile::tempdir().unwrap();
    ok(t.path(), &["synth", "--n", "500", "--seed", "4"]);
    ok(t.path(), &["ingest", "--input", "audit-out/dataset", "--out", "again"]);
    let strip = |p: PathBuf| {
        let s = fs::read_to_string(p).unwrap();
        s.lines().skip(1).collect::<Vec<_>>().join("\n")
    };
    for f in ["persons.csv", "charges.csv", "events.csv", "assessments.csv"] {
        assert_eq!(
            strip(t.path().join("audit-out/dataset").join(f)),
            strip(t.path().join("again/dataset").join(f)),
            "{f}"
        );
    }
}

#[test]
fn statute_table_comes_from_the_environment() {
    let t = tempfile::tempdir().unwrap();
    ok(t.path(), &["synth", "--n", "400", "--seed", "6"]);
    ok(t.path(), &["features"]);
    let table = t.path().join("empty_table.csv");
    fs::write(&table, "prefix,flags\n").unwrap();
    // An empty table leaves only the built-in family violence statute.
    let o = Command::new(env!("CARGO_BIN_EXE_audit"))
        .current_dir(t.path())
        .env("AUDIT_STATUTE_TABLE", &table)
        .args(["features", "--input", "audit-out/dataset", "--out", "plain"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let read = |p: &str| {
        let text = fs::read_to_string(t.path().join(p)).unwrap();
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let h = rdr.headers().unwrap().clone();
        let i = h.iter().position(|c| c == "violence_history_sum").unwrap();
        rdr.records().map(|r| r.unwrap()[i].parse::<u32>().unwrap_or(0)).sum::<u32>()
    };
    assert!(read("plain/features/profiles.csv") < read("audit-out/features/profiles.csv"));
    let sha = |p: &str| {
        let v: Value = serde_json::from_str(&fs::read_to_string(t.path().join(p)).unwrap()).unwrap();
        v["config"]["statute_table_sha256"].as_str().unwrap().to_string()
    };
    assert_ne!(sha("plain/features/config.json"), sha("audit-out/features/config.json"));
}
