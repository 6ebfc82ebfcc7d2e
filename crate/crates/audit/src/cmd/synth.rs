use std::path::Path;

use anyhow::Result;

use score_audit_core::synthoracle::{generate, SyntheticSpec};

use super::{ingest, write_config, Ctx, SYNTH_DIR};
use crate::cli::InvalidFlag;
use crate::io::{self, COHORT_FILES};

/// `--seed` replaces the spec file's seed.
pub fn run(ctx: &Ctx, n: usize, spec_path: Option<&Path>) -> Result<()> {
    let mut spec: SyntheticSpec = match spec_path {
        Some(p) if !p.is_file() => return Err(InvalidFlag(format!("--spec: no such file {}", p.display())).into()),
        Some(p) => io::read_json(p)?,
        None => SyntheticSpec::default(),
    };
    spec.seed = ctx.opts.seed;
    let cohort = generate(&spec, n)?;

    let dir = ctx.dir(SYNTH_DIR);
    let mut cfg = ctx.config("synth", None);
    cfg.n = Some(n);
    cfg.synth_spec_sha256 = Some(io::sha256_hex(&serde_json::to_vec(&spec)?));
    let hash = write_config(&dir, &cfg)?;
    io::write_cohort(&dir, &cohort.raw, &hash)?;
    io::write_json(&dir.join("truth.json"), &hash, &cohort.truth)?;
    io::write_json(&dir.join("spec.json"), &hash, &spec)?;

    let digest = io::digest_files(&dir, &COHORT_FILES)?;
    let d = ingest::ingest_into(ctx, &cohort.raw, digest)?;
    println!(
        "generated {} persons and {} assessments in {}",
        d.persons().len(),
        d.assessments().len(),
        dir.display()
    );
    Ok(())
}
