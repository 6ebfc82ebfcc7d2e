//! Command-line surface: verbs, flags and exit codes.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 missing upstream
//! artifact, 64 invalid flag.

use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use score_audit_core::lowerbound::DEFAULT_C;
use score_audit_core::ml::Family;
use score_audit_core::records::ScoreKind;

use crate::io::MissingArtifact;

pub const EXIT_ERROR: u8 = 1;
pub const EXIT_MISSING: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(name = "audit", version, about = "Audit a black-box risk score from cohort records")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Validate the four cohort CSVs and write the canonical dataset.
    Ingest,
    /// Per-assessment subscale components, sums and labels.
    Features,
    /// Age spline (and violence-history step) from the lower envelope.
    Reconstruct,
    /// Remainders, ablation tables and prediction scatters.
    Residuals,
    /// Confusion rates by race, category logistic fit, age curves.
    Fairness,
    /// Assessments inconsistent with the reconstruction.
    Anomalies,
    /// Generate a synthetic cohort with known components, then ingest it.
    Synth {
        #[arg(long, default_value_t = 5000)]
        n: usize,
        /// JSON model spec; defaults to the built-in one.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Bundle every stage's outputs into report.json and a figure set.
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Features => "features",
            Command::Reconstruct => "reconstruct",
            Command::Residuals => "residuals",
            Command::Fairness => "fairness",
            Command::Anomalies => "anomalies",
            Command::Synth { .. } => "synth",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoreArg {
    General,
    Violent,
}

impl From<ScoreArg> for ScoreKind {
    fn from(s: ScoreArg) -> Self {
        match s {
            ScoreArg::General => ScoreKind::General,
            ScoreArg::Violent => ScoreKind::Violent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Linear,
    RandomForest,
    BoostedTrees,
    Svm,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Linear => Family::Linear,
            FamilyArg::RandomForest => Family::RandomForest,
            FamilyArg::BoostedTrees => Family::GradientBoostedTrees,
            FamilyArg::Svm => Family::KernelSvm,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    /// Raw cohort directory for `ingest`; canonical dataset for later stages
    /// (default: OUT/dataset).
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Working directory holding every stage's outputs.
    #[arg(long, global = true, default_value = "audit-out")]
    pub out: PathBuf,
    /// Restrict to one score (default: both).
    #[arg(long, global = true, value_enum)]
    pub score: Option<ScoreArg>,
    /// Spline segments (default: 3 general, 4 violent).
    #[arg(long = "K", global = true)]
    pub k: Option<usize>,
    /// Outlier margin below the lower bound.
    #[arg(long, global = true, default_value_t = DEFAULT_C)]
    pub c: f64,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Cross-validation folds (default: 5; 10 for fairness).
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    #[arg(long, global = true, action = ArgAction::Set, default_value_t = true, value_name = "BOOL")]
    pub pretrial_only: bool,
    /// Deciles above this are predicted positive (medium or high risk).
    #[arg(long, global = true, default_value_t = 4)]
    pub decile_cut: u8,
    /// Ages at or below this are predicted positive by the age model.
    #[arg(long, global = true, default_value_t = 24)]
    pub age_cutoff: u32,
    /// JSON file with probation and anomaly thresholds.
    #[arg(long, global = true)]
    pub thresholds: Option<PathBuf>,
    /// Statute classification CSV (overrides AUDIT_STATUTE_TABLE).
    #[arg(long, global = true)]
    pub statute_table: Option<PathBuf>,
    /// Learner families for ablations (default: all four).
    #[arg(long, global = true, value_enum, value_delimiter = ',')]
    pub families: Vec<FamilyArg>,
}

impl Options {
    pub fn scores(&self) -> Vec<ScoreKind> {
        match self.score {
            Some(s) => vec![s.into()],
            None => vec![ScoreKind::General, ScoreKind::Violent],
        }
    }

    pub fn families(&self) -> Vec<Family> {
        if self.families.is_empty() {
            return Family::ALL.to_vec();
        }
        let mut f: Vec<Family> = self.families.iter().map(|&a| a.into()).collect();
        f.sort();
        f.dedup();
        f
    }
}

/// A flag value outside its domain. Exit code 64.
#[derive(Debug)]
pub struct InvalidFlag(pub String);

impl std::fmt::Display for InvalidFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid flag: {}", self.0)
    }
}

impl std::error::Error for InvalidFlag {}

pub fn validate(cli: &Cli) -> Result<(), InvalidFlag> {
    let o = &cli.opts;
    if !(o.c.is_finite() && o.c >= 0.0) {
        return Err(InvalidFlag(format!("--c must be a nonnegative number, got {}", o.c)));
    }
    if o.k == Some(0) {
        return Err(InvalidFlag("--K must be at least 1".into()));
    }
    if matches!(o.folds, Some(f) if f < 2) {
        return Err(InvalidFlag("--folds must be at least 2".into()));
    }
    if !(1..=10).contains(&o.decile_cut) {
        return Err(InvalidFlag(format!("--decile-cut must be in 1..=10, got {}", o.decile_cut)));
    }
    match &cli.command {
        Command::Synth { n: 0, .. } => Err(InvalidFlag("--n must be at least 1".into())),
        Command::Ingest if o.input.is_none() => Err(InvalidFlag("ingest needs --input DIR".into())),
        _ => Ok(()),
    }
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<MissingArtifact>().is_some() {
        EXIT_MISSING
    } else if err.downcast_ref::<InvalidFlag>().is_some() {
        EXIT_USAGE
    } else {
        EXIT_ERROR
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
        }
    };
    match validate(&cli).map_err(anyhow::Error::from).and_then(|()| crate::cmd::run(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("audit {}: {e:#}", cli.command.name());
            exit_code(&e)
        }
    }
}
