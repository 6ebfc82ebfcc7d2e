//! Resolved run configuration. Its SHA-256 over canonical JSON is the config
//! hash stamped on every output.
//!
//! Output locations are not part of the config: the same computation written
//! to two directories gives identical files. Inputs enter through a digest
//! of their contents rather than their paths.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use score_audit_core::anomalies::{GapCutoffs, HistoryThresholds};
use score_audit_core::records::{ScoreKind, T_OFF_DAYS, T_ON_DAYS};
use score_audit_core::subscales::{StatuteTable, DEFAULT_STATUTE_TABLE};

use crate::io::{self, sha256_hex};

pub const STATUTE_TABLE_ENV: &str = "AUDIT_STATUTE_TABLE";

/// Contents of the `--thresholds` file. Missing keys take their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub t_on: i64,
    pub t_off: i64,
    pub history: HistoryThresholds,
    pub gap: GapCutoffs,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            t_on: T_ON_DAYS,
            t_off: T_OFF_DAYS,
            history: HistoryThresholds::default(),
            gap: GapCutoffs::default(),
        }
    }
}

impl Thresholds {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => io::read_json(p),
        }
    }
}

/// Statute classification text: the named file, else `AUDIT_STATUTE_TABLE`,
/// else the shipped table.
pub fn statute_table_text(path: Option<&Path>) -> Result<String> {
    let from_env = std::env::var_os(STATUTE_TABLE_ENV).map(std::path::PathBuf::from);
    match path.map(Path::to_path_buf).or(from_env) {
        Some(p) => {
            io::require_file(&p)?;
            std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))
        }
        None => Ok(DEFAULT_STATUTE_TABLE.to_string()),
    }
}

pub fn parse_statutes(text: &str) -> Result<StatuteTable> {
    Ok(StatuteTable::parse(text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub command: String,
    pub input_digest: Option<String>,
    pub scores: Vec<ScoreKind>,
    pub segments: Option<usize>,
    pub c: f64,
    pub seed: u64,
    pub folds: Option<usize>,
    pub pretrial_only: bool,
    pub decile_cut: u8,
    pub age_cutoff: u32,
    pub families: Vec<String>,
    pub thresholds: Thresholds,
    pub statute_table_sha256: String,
    pub n: Option<usize>,
    pub synth_spec_sha256: Option<String>,
}

impl AuditConfig {
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds_file_may_be_partial() {
        let t: Thresholds = serde_json::from_str(r#"{"t_on": 100}"#).unwrap();
        assert_eq!(t.t_on, 100);
        assert_eq!(t.t_off, T_OFF_DAYS);
        assert_eq!(t.history, HistoryThresholds::default());
        assert!(serde_json::from_str::<Thresholds>(r#"{"t_onn": 1}"#).is_err());
    }
}
