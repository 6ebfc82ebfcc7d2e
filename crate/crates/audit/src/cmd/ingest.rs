use std::path::Path;

use anyhow::Result;

use score_audit_core::records::{CohortDataset, RawCohort};

use super::{write_config, Ctx, DATASET_DIR};
use crate::io::{self, COHORT_FILES};

pub fn run(ctx: &Ctx) -> Result<()> {
    let input = ctx.opts.input.as_deref().expect("validated");
    let raw = io::read_cohort(input)?;
    let digest = io::digest_files(input, &COHORT_FILES)?;
    let d = ingest_into(ctx, &raw, digest)?;
    println!(
        "ingested {} persons, {} charges, {} probation events, {} assessments into {}",
        d.persons().len(),
        d.charges().len(),
        d.probation_events().len(),
        d.assessments().len(),
        ctx.dir(DATASET_DIR).display()
    );
    Ok(())
}

/// Validates `raw` and writes the canonical dataset and provenance.
pub fn ingest_into(ctx: &Ctx, raw: &RawCohort, input_digest: String) -> Result<CohortDataset> {
    let dataset = CohortDataset::ingest(raw, &ctx.ingest_config())?;
    let dir = ctx.dir(DATASET_DIR);
    let hash = write_config(&dir, &ctx.config("ingest", Some(input_digest)))?;
    io::write_cohort(&dir, &dataset.to_raw(), &hash)?;
    io::write_json(Path::new(&dir.join("provenance.json")), &hash, dataset.provenance())?;
    Ok(dataset)
}
