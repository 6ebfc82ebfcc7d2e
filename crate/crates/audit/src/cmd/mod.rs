//! One module per verb. Every verb reads from and writes to stage
//! directories under `--out`:
//!
//! | dir           | written by            | read by                      |
//! |---------------|-----------------------|------------------------------|
//! | `synth`       | synth                 | ingest (as `--input`)        |
//! | `dataset`     | ingest, synth         | every analysis verb          |
//! | `features`    | features              | report                       |
//! | `reconstruct` | reconstruct           | residuals, anomalies, report |
//! | `residuals`   | residuals             | report                       |
//! | `fairness`    | fairness              | report                       |
//! | `anomalies`   | anomalies             | report                       |
//! | `report`      | report                |                              |

use std::path::{Path, PathBuf};

use anyhow::Result;

use score_audit_core::profile::{build_profiles, ProfileRow};
use score_audit_core::records::{CohortDataset, IngestConfig, ScoreKind};
use score_audit_core::subscales::SubscaleConfig;

use crate::cli::{Cli, Command, InvalidFlag, Options};
use crate::config::{self, AuditConfig, Thresholds};
use crate::io::{self, COHORT_FILES};

mod anomalies;
mod fairness;
mod features;
mod ingest;
pub mod reconstruct;
mod report;
mod residuals;
mod synth;

pub const SYNTH_DIR: &str = "synth";
pub const DATASET_DIR: &str = "dataset";
pub const FEATURES_DIR: &str = "features";
pub const RECONSTRUCT_DIR: &str = "reconstruct";
pub const RESIDUALS_DIR: &str = "residuals";
pub const FAIRNESS_DIR: &str = "fairness";
pub const ANOMALIES_DIR: &str = "anomalies";
pub const REPORT_DIR: &str = "report";

pub fn run(cli: &Cli) -> Result<()> {
    let ctx = Ctx::new(&cli.opts)?;
    match &cli.command {
        Command::Ingest => ingest::run(&ctx),
        Command::Features => features::run(&ctx),
        Command::Reconstruct => reconstruct::run(&ctx),
        Command::Residuals => residuals::run(&ctx),
        Command::Fairness => fairness::run(&ctx),
        Command::Anomalies => anomalies::run(&ctx),
        Command::Synth { n, spec } => synth::run(&ctx, *n, spec.as_deref()),
        Command::Report => report::run(&ctx),
    }
}

/// Options plus the files they name, loaded once.
pub struct Ctx<'a> {
    pub opts: &'a Options,
    pub thresholds: Thresholds,
    pub statute_text: String,
}

impl<'a> Ctx<'a> {
    fn new(opts: &'a Options) -> Result<Self> {
        for (flag, p) in [("--thresholds", &opts.thresholds), ("--statute-table", &opts.statute_table)] {
            if let Some(p) = p.as_deref().filter(|p| !p.is_file()) {
                return Err(InvalidFlag(format!("{flag}: no such file {}", p.display())).into());
            }
        }
        Ok(Self {
            opts,
            thresholds: Thresholds::load(opts.thresholds.as_deref())?,
            statute_text: config::statute_table_text(opts.statute_table.as_deref())?,
        })
    }

    pub fn dir(&self, stage: &str) -> PathBuf {
        self.opts.out.join(stage)
    }

    pub fn config(&self, command: &str, input_digest: Option<String>) -> AuditConfig {
        let o = self.opts;
        AuditConfig {
            command: command.to_string(),
            input_digest,
            scores: o.scores(),
            segments: o.k,
            c: o.c,
            seed: o.seed,
            folds: o.folds,
            pretrial_only: o.pretrial_only,
            decile_cut: o.decile_cut,
            age_cutoff: o.age_cutoff,
            families: o.families().iter().map(|f| f.as_str().to_string()).collect(),
            thresholds: self.thresholds,
            statute_table_sha256: io::sha256_hex(self.statute_text.as_bytes()),
            n: None,
            synth_spec_sha256: None,
        }
    }

    pub fn subscale_config(&self) -> Result<SubscaleConfig> {
        Ok(SubscaleConfig {
            t_on: self.thresholds.t_on,
            t_off: self.thresholds.t_off,
            statutes: config::parse_statutes(&self.statute_text)?,
        })
    }

    pub fn ingest_config(&self) -> IngestConfig {
        IngestConfig {
            pretrial_only: self.opts.pretrial_only,
            ..IngestConfig::default()
        }
    }

    /// The canonical dataset: `--input`, else `OUT/dataset`.
    pub fn dataset_dir(&self) -> PathBuf {
        self.opts.input.clone().unwrap_or_else(|| self.dir(DATASET_DIR))
    }

    /// Loads the canonical dataset and the digest of its files.
    pub fn load(&self) -> Result<Loaded> {
        let dir = self.dataset_dir();
        for f in COHORT_FILES {
            io::require_file(&dir.join(f))?;
        }
        let raw = io::read_cohort(&dir)?;
        let digest = io::digest_files(&dir, &COHORT_FILES)?;
        let dataset = CohortDataset::ingest(&raw, &self.ingest_config())?;
        let rows = build_profiles(&dataset, &self.subscale_config()?);
        Ok(Loaded { dataset, rows, digest })
    }
}

pub struct Loaded {
    pub dataset: CohortDataset,
    pub rows: Vec<ProfileRow>,
    pub digest: String,
}

/// Writes `config.json` into a stage directory and returns the hash.
pub fn write_config(dir: &Path, cfg: &AuditConfig) -> Result<String> {
    let hash = cfg.hash();
    io::write_json(dir.join("config.json").as_path(), &hash, &serde_json::json!({ "config": cfg }))?;
    Ok(hash)
}

/// Digest of upstream files named relative to `dir`, all required.
pub fn upstream_digest(dir: &Path, names: &[String], base: &str) -> Result<String> {
    for n in names {
        io::require_file(&dir.join(n))?;
    }
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let d = io::digest_files(dir, &refs)?;
    Ok(io::sha256_hex(format!("{base}{d}").as_bytes()))
}

pub fn component_file(kind: ScoreKind) -> String {
    format!("{}.json", kind.as_str())
}

pub fn svg(dir: &Path, name: &str, chart: &crate::svg::Chart) -> Result<()> {
    io::write_bytes(&dir.join(name), chart.render().as_bytes())
}
